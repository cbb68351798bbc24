//! Run and backend configuration.
//!
//! Config files are plain text, one `key = value` per line. Blank lines and
//! lines starting with `#` are ignored. A value may be wrapped in double
//! quotes to keep surrounding spaces; inside quotes `\n`, `\t`, `\"` and `\\`
//! are escapes. Keys are case-sensitive and may appear once.
//!
//! ```text
//! # backend.conf
//! endpoint_url = http://localhost:8000/v1/chat/completions
//! model_name = llava
//! auth_token_env_var = RELSCENE_TOKEN
//! template.user_prefix = "USER: "
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::BackendConfig;
use crate::describe::DescriptionPolicy;
use crate::error::{Error, Result};
use crate::fusion::HeadConfig;
use crate::prompt::{IntegrationFlags, PromptTemplate, ReferenceStyle};
use crate::text_encoding::EmbeddingDims;

pub const DEFAULT_SEED: u64 = 42;

fn unquote(raw: &str, line: usize) -> Result<String> {
    let Some(inner) = raw.strip_prefix('"') else {
        return Ok(raw.to_string());
    };
    let inner = inner
        .strip_suffix('"')
        .ok_or_else(|| Error::Config(format!("line {line}: unterminated quoted value")))?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('"') => out.push('"'),
            Some('\\') => out.push('\\'),
            other => {
                return Err(Error::Config(format!("line {line}: bad escape \\{}", other.unwrap_or(' '))));
            }
        }
    }
    Ok(out)
}

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {n}: expected `key = value`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {n}: empty key")));
        }
        if out.insert(key.to_string(), unquote(value.trim(), n)?).is_some() {
            return Err(Error::Config(format!("line {n}: duplicate key `{key}`")));
        }
    }
    Ok(out)
}

pub fn read_key_values(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Typed access to a key-value map; every key read is consumed so leftovers
/// can be reported as unknown.
struct Fields(BTreeMap<String, String>);

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("`{key}`: cannot parse {v:?}: {e}"))),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

impl BackendConfig {
    pub fn from_key_values(map: BTreeMap<String, String>) -> Result<Self> {
        let mut f = Fields(map);
        let mut c = BackendConfig::default();
        f.set("endpoint_url", &mut c.endpoint_url)?;
        f.set("model_name", &mut c.model_name)?;
        f.set("timeout_ms", &mut c.timeout_ms)?;
        f.set("max_retries", &mut c.max_retries)?;
        f.set("request_parallelism", &mut c.request_parallelism)?;
        f.set("retry_backoff_ms", &mut c.retry_backoff_ms)?;
        c.auth_token_env_var = f.take("auth_token_env_var")?;
        f.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(read_key_values(path)?)
    }
}

impl FromStr for ReferenceStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "name" | "name_only" => Ok(ReferenceStyle::NameOnly),
            "name-id" | "name_with_id" => Ok(ReferenceStyle::NameWithId),
            "id" | "id_only" => Ok(ReferenceStyle::IdOnly),
            _ => Err(Error::Config(format!("unknown reference style {s:?} (name, name-id, id)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            _ => Err(Error::Config(format!("unknown backend {s:?} (mock, http)"))),
        }
    }
}

/// Everything one pipeline run needs. Stage inputs left unset default to the
/// files an earlier stage wrote under `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scene: Option<PathBuf>,
    pub views: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    /// Precomputed embedding files; mock features are used when unset.
    pub point_embeddings: Option<PathBuf>,
    pub visual_embeddings: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub style: ReferenceStyle,
    pub flags: IntegrationFlags,
    pub description: DescriptionPolicy,
    pub backend: BackendKind,
    pub backend_config: Option<PathBuf>,
    pub parallelism: usize,
    pub seed: u64,
    pub dims: EmbeddingDims,
    pub head: HeadConfig,
    pub template: PromptTemplate,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            views: None,
            tasks: None,
            descriptions: None,
            predictions: None,
            point_embeddings: None,
            visual_embeddings: None,
            text_embeddings: None,
            out: PathBuf::from("out"),
            style: ReferenceStyle::default(),
            flags: IntegrationFlags::default(),
            description: DescriptionPolicy::default(),
            backend: BackendKind::default(),
            backend_config: None,
            parallelism: 4,
            seed: DEFAULT_SEED,
            dims: EmbeddingDims::default(),
            head: HeadConfig::default(),
            template: PromptTemplate::default(),
        }
    }
}

impl RunConfig {
    /// Overrides fields from a key-value map. Keys match the field names;
    /// nested fields use dots (`head.depth`, `template.system`, `dims.text`).
    pub fn apply_key_values(&mut self, map: BTreeMap<String, String>) -> Result<()> {
        let mut f = Fields(map);
        for (key, slot) in [
            ("scene", &mut self.scene),
            ("views", &mut self.views),
            ("tasks", &mut self.tasks),
            ("descriptions", &mut self.descriptions),
            ("predictions", &mut self.predictions),
            ("point_embeddings", &mut self.point_embeddings),
            ("visual_embeddings", &mut self.visual_embeddings),
            ("text_embeddings", &mut self.text_embeddings),
            ("backend_config", &mut self.backend_config),
        ] {
            if let Some(p) = f.take::<PathBuf>(key)? {
                *slot = Some(p);
            }
        }
        f.set("out", &mut self.out)?;
        f.set("style", &mut self.style)?;
        f.set("embedding_fusion", &mut self.flags.embedding_fusion)?;
        f.set("prompt_injection", &mut self.flags.prompt_injection)?;
        f.set("key.central_fraction", &mut self.description.key.central_fraction)?;
        f.set("key.min_visible", &mut self.description.key.min_visible)?;
        f.set("fallback", &mut self.description.fallback)?;
        f.set("backend", &mut self.backend)?;
        f.set("parallelism", &mut self.parallelism)?;
        f.set("seed", &mut self.seed)?;
        f.set("dims.point", &mut self.dims.point)?;
        f.set("dims.visual", &mut self.dims.visual)?;
        f.set("dims.text", &mut self.dims.text)?;
        f.set("head.depth", &mut self.head.depth)?;
        f.set("head.hidden_dim", &mut self.head.hidden_dim)?;
        f.set("head.out_dim", &mut self.head.out_dim)?;
        f.set("template.system", &mut self.template.system)?;
        f.set("template.user_prefix", &mut self.template.user_prefix)?;
        f.set("template.assistant_prefix", &mut self.template.assistant_prefix)?;
        f.set("template.descriptions_first", &mut self.template.descriptions_first)?;
        f.finish()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = Self::default();
        c.apply_key_values(read_key_values(path)?)?;
        Ok(c)
    }

    /// Checks value ranges and that every configured input path exists.
    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        let f = self.description.key.central_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("key.central_fraction {f} outside (0, 1]")));
        }
        if self.head.depth == 0 || self.head.out_dim == 0 || self.head.hidden_dim == 0 {
            return Err(Error::Config("head dimensions must be positive".into()));
        }
        if self.dims.point == 0 || self.dims.visual == 0 || self.dims.text == 0 {
            return Err(Error::Config("embedding dimensions must be positive".into()));
        }
        for p in [
            &self.scene,
            &self.views,
            &self.tasks,
            &self.descriptions,
            &self.predictions,
            &self.point_embeddings,
            &self.visual_embeddings,
            &self.text_embeddings,
            &self.backend_config,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.backend == BackendKind::Http && self.backend_config.is_none() {
            return Err(Error::Config("the http backend needs backend_config".into()));
        }
        Ok(())
    }
}
