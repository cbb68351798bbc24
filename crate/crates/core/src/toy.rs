//! Bundled toy scene: eight objects in a living room, three views and six
//! tasks. Everything is generated in code so every command runs offline.

use crate::metrics::{TaskInstance, TaskKind};
use crate::model::{ObjectProposal, Point, Scene};
use crate::projection::CameraView;

pub const TOY_SCENE_ID: &str = "toy_living_room";

/// (index, label, center, half extents, rgb)
type ToyObject = (usize, &'static str, [f32; 3], [f32; 3], [f32; 3]);

const OBJECTS: [ToyObject; 8] = [
    (1, "table", [0.0, 0.0, 0.40], [0.60, 0.40, 0.05], [0.55, 0.35, 0.20]),
    (2, "chair", [-0.95, 0.0, 0.45], [0.22, 0.22, 0.45], [0.40, 0.25, 0.15]),
    (3, "chair", [0.95, 0.0, 0.45], [0.22, 0.22, 0.45], [0.40, 0.25, 0.15]),
    (4, "lamp", [0.0, 0.1, 0.90], [0.10, 0.10, 0.25], [0.95, 0.90, 0.60]),
    (5, "sofa", [8.0, 2.2, 0.40], [0.90, 0.40, 0.40], [0.20, 0.30, 0.60]),
    (6, "tv", [8.0, 3.9, 1.20], [0.55, 0.05, 0.32], [0.05, 0.05, 0.05]),
    (7, "bookshelf", [-8.0, 3.6, 1.00], [0.45, 0.15, 1.00], [0.60, 0.45, 0.30]),
    (8, "plant", [-6.9, 3.4, 0.45], [0.20, 0.20, 0.45], [0.20, 0.60, 0.20]),
];

/// Samples per axis inside each box.
const GRID: usize = 5;

fn object(index: usize, label: &str, center: [f32; 3], half: [f32; 3], rgb: [f32; 3]) -> ObjectProposal {
    let step = |k: usize, h: f32| -h + 2.0 * h * k as f32 / (GRID - 1) as f32;
    let mut points = Vec::with_capacity(GRID * GRID * GRID);
    for i in 0..GRID {
        for j in 0..GRID {
            for k in 0..GRID {
                points.push(Point::new(
                    center[0] + step(i, half[0]),
                    center[1] + step(j, half[1]),
                    center[2] + step(k, half[2]),
                    rgb[0],
                    rgb[1],
                    rgb[2],
                ));
            }
        }
    }
    ObjectProposal::new(index, points, Some(label.to_string())).expect("toy object is valid")
}

pub fn toy_views() -> Vec<CameraView> {
    let up = [0.0, 0.0, 1.0];
    let view = |id: &str, eye: [f64; 3], target: [f64; 3]| {
        CameraView::look_at(id, eye, target, up, 400.0, 640, 480).expect("toy view is valid")
    };
    vec![
        view("view_dining", [0.0, -4.0, 1.6], [0.0, 0.0, 0.5]),
        view("view_lounge", [8.0, -1.5, 1.6], [8.0, 3.0, 0.8]),
        view("view_corner", [-7.4, -0.8, 1.6], [-7.4, 3.5, 0.8]),
    ]
}

pub fn toy_scene() -> Scene {
    let objects = OBJECTS
        .iter()
        .map(|&(i, label, c, h, rgb)| object(i, label, c, h, rgb))
        .collect();
    Scene::new(TOY_SCENE_ID, objects, toy_views()).expect("toy scene is valid")
}

/// Grounding queries quote the mock describer's output for their target.
pub const LAMP_QUERY: &str = "Which object fits this description: \"There is a lamp in the room. \
The lamp is near the table. The lamp is above the table. The lamp is to the right of the chair 1. \
The lamp is above the chair 1. The lamp is to the left of the chair 2. The lamp is above the chair 2.\"";
pub const SOFA_QUERY: &str =
    "Which object fits this description: \"There is a sofa in the room. The sofa is below the tv.\"";
pub const BOOKSHELF_QUERY: &str = "Which object fits this description: \"There is a bookshelf in the room. \
The bookshelf is to the left of the plant. The bookshelf is above the plant.\"";

pub fn toy_tasks(scene: &Scene) -> Vec<TaskInstance> {
    let aabb = |i: usize| scene.object(i).expect("toy object").aabb();
    let mut tasks = Vec::new();

    for (id, query, target) in [
        ("toy_ground_lamp", LAMP_QUERY, 4),
        ("toy_ground_sofa", SOFA_QUERY, 5),
        ("toy_ground_bookshelf", BOOKSHELF_QUERY, 7),
    ] {
        let mut t = TaskInstance::new(id, TaskKind::GroundSingle, query);
        t.gt_boxes = vec![aabb(target)];
        t.target_object = Some(target);
        tasks.push(t);
    }

    let mut multi = TaskInstance::new("toy_ground_chairs", TaskKind::GroundMulti, "Find all the chairs in the room.");
    multi.gt_boxes = vec![aabb(2), aabb(3)];
    tasks.push(multi);

    let mut caption = TaskInstance::new("toy_caption_tv", TaskKind::Caption, "Describe the tv in the room.");
    caption.gt_boxes = vec![aabb(6)];
    caption.target_object = Some(6);
    caption.gt_texts = vec![
        "There is a tv in the room. The tv is above the sofa.".to_string(),
        "a black tv hangs on the wall above the sofa".to_string(),
    ];
    tasks.push(caption);

    let mut qa = TaskInstance::new("toy_qa_lamp", TaskKind::Qa, "What is above the table?");
    qa.gt_texts = vec!["lamp".to_string(), "a lamp".to_string()];
    tasks.push(qa);

    tasks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockVlm;
    use crate::describe::{describe_scene, DescriptionPolicy};
    use crate::projection::project_scene;

    #[test]
    fn grounding_queries_quote_mock_descriptions() {
        let scene = toy_scene();
        let records =
            describe_scene(&scene, &project_scene(&scene), &DescriptionPolicy::default(), &MockVlm { scene: &scene }, 1)
                .unwrap();
        for t in toy_tasks(&scene).iter().filter(|t| t.task_kind == TaskKind::GroundSingle) {
            let target = t.target_object.unwrap();
            let quoted = format!("\"{}\"", records[&target].text);
            assert!(t.query.contains(&quoted), "{}: {} does not quote {quoted}", t.task_id, t.query);
        }
    }

    #[test]
    fn shape() {
        let scene = toy_scene();
        assert_eq!((scene.objects().len(), scene.views.len()), (8, 3));
        let tasks = toy_tasks(&scene);
        assert_eq!(tasks.len(), 6);
        assert!(tasks.iter().all(|t| t.validate().is_ok()));
    }
}
