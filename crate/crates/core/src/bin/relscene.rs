use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relscene::config::{BackendKind, RunConfig};
use relscene::pipeline;
use relscene::prompt::ReferenceStyle;
use relscene::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "relscene", version, about = "Object-centric 3D scene-language pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Copy a scene (or the bundled toy scene) into the output directory.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Use the bundled toy scene and its tasks.
        #[arg(long)]
        toy: bool,
    },
    /// Project every object into every view.
    Project(Common),
    /// Generate relational descriptions.
    Describe(Common),
    /// Write point, visual and text embedding files.
    Encode(Common),
    /// Build object token blocks.
    Fuse(Common),
    /// Assemble prompts for every task.
    Prompt(Common),
    /// Query the language model and write predictions.
    Answer(Common),
    /// Score predictions against the tasks.
    Eval(Common),
    /// Run every stage with mock backends and print the metric report.
    RunE2eMock(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Camera views JSON replacing the scene's own views.
    #[arg(long)]
    views: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// name, name-id or id
    #[arg(long)]
    style: Option<String>,
    #[arg(long)]
    no_embed_fusion: bool,
    #[arg(long)]
    no_prompt_inject: bool,
    /// mock, or a backend config file for an HTTP endpoint
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn into_config(self) -> relscene::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let set = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
            if v.is_some() {
                *slot = v;
            }
        };
        set(&mut c.scene, self.scene);
        set(&mut c.views, self.views);
        set(&mut c.tasks, self.tasks);
        set(&mut c.descriptions, self.descriptions);
        set(&mut c.predictions, self.predictions);
        if let Some(o) = self.out {
            c.out = o;
        }
        if let Some(s) = self.style {
            c.style = s.parse::<ReferenceStyle>()?;
        }
        if self.no_embed_fusion {
            c.flags.embedding_fusion = false;
        }
        if self.no_prompt_inject {
            c.flags.prompt_injection = false;
        }
        match self.backend.as_deref() {
            None => {}
            Some("mock") => c.backend = BackendKind::Mock,
            Some(path) => {
                c.backend = BackendKind::Http;
                c.backend_config = Some(PathBuf::from(path));
            }
        }
        if let Some(p) = self.parallelism {
            c.parallelism = p;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(command: Command) -> relscene::Result<()> {
    match command {
        Command::Ingest { common, toy } => {
            let scene = pipeline::ingest(&common.into_config()?, toy)?;
            println!("ingested {} ({} objects, {} views)", scene.scene_id, scene.objects().len(), scene.views.len());
        }
        Command::Project(c) => {
            let p = pipeline::project(&c.into_config()?)?;
            println!("projected into {} views", p.len());
        }
        Command::Describe(c) => {
            let records = pipeline::describe(&c.into_config()?)?;
            let missing = records.values().filter(|r| r.is_missing()).count();
            println!("{} descriptions, {missing} missing", records.len() - missing);
        }
        Command::Encode(c) => {
            pipeline::encode(&c.into_config()?)?;
            println!("wrote embeddings");
        }
        Command::Fuse(c) => {
            let t = pipeline::fuse(&c.into_config()?)?;
            println!("fused {} x {} token matrix", t.rows, t.cols);
        }
        Command::Prompt(c) => {
            let p = pipeline::prompt(&c.into_config()?)?;
            println!("assembled {} prompts", p.len());
        }
        Command::Answer(c) => {
            let p = pipeline::answer(&c.into_config()?)?;
            println!("answered {} tasks", p.len());
        }
        Command::Eval(c) => print!("{}", pipeline::eval(&c.into_config()?)?.summary()),
        Command::RunE2eMock(c) => print!("{}", pipeline::run_e2e_mock(&c.into_config()?)?.summary()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Backend(_) | Error::Protocol { .. } => ExitCode::from(EXIT_BACKEND),
                _ => ExitCode::from(EXIT_VALIDATION),
            }
        }
    }
}
