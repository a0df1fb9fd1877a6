//! Promptable segmenters.
//!
//! [`BaselineSegmenter`] labels each pixel by its nearest prompt and needs no
//! model. [`SegmenterAdapter`] runs an external command that reads a scheme
//! JSON and writes a P5 mask, which is how real foundation segmenters are
//! reached.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use wait_timeout::ChildExt;

use crate::config_text::parse_entries;
use crate::error::{Error, Result};
use crate::io::{load_mask, save_prompt_scheme};
use crate::mask::MaskImage;
use crate::spatial::PromptScheme;

pub trait Segmenter: Send + Sync {
    /// Column label used in sweep reports.
    fn tag(&self) -> &str;

    fn segment(&self, image: Option<&Path>, scheme: &PromptScheme) -> Result<MaskImage>;
}

/// Nearest-prompt labelling: a pixel is foreground iff its nearest prompt is
/// positive. Equidistant pixels go to background, and hard negatives count
/// as negatives.
pub fn baseline_segment(scheme: &PromptScheme) -> Result<MaskImage> {
    let positives: Vec<(i64, i64)> = scheme
        .positives()
        .map(|p| (p.x as i64, p.y as i64))
        .collect();
    if positives.is_empty() {
        return Err(Error::NoPositivePrompts);
    }
    let negatives: Vec<(i64, i64)> = scheme
        .negatives()
        .map(|p| (p.x as i64, p.y as i64))
        .collect();
    let (w, h) = (scheme.width() as usize, scheme.height() as usize);
    let nearest = |points: &[(i64, i64)], x: i64, y: i64| {
        points
            .iter()
            .map(|&(px, py)| (px - x) * (px - x) + (py - y) * (py - y))
            .min()
            .unwrap_or(i64::MAX)
    };
    let mut data = vec![0u8; w * h];
    data.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let (x, y) = (x as i64, y as i64);
                *out = u8::from(nearest(&positives, x, y) < nearest(&negatives, x, y));
            }
        });
    MaskImage::new(w, h, data)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BaselineSegmenter;

impl Segmenter for BaselineSegmenter {
    fn tag(&self) -> &str {
        "baseline"
    }

    fn segment(&self, _image: Option<&Path>, scheme: &PromptScheme) -> Result<MaskImage> {
        baseline_segment(scheme)
    }
}

/// External segmenter reached through a command template with `{image}`,
/// `{scheme}` and `{out}` placeholders.
#[derive(Debug)]
pub struct SegmenterAdapter {
    template: String,
    workdir: PathBuf,
    timeout: Duration,
    tag: String,
    lock: Mutex<()>,
}

/// Result of one adapter invocation.
#[derive(Clone, Debug)]
pub struct AdapterRun {
    pub mask: MaskImage,
    pub stdout: String,
    pub stderr: String,
}

static RUN_COUNTER: AtomicU64 = AtomicU64::new(0);

const PLACEHOLDERS: [&str; 3] = ["{image}", "{scheme}", "{out}"];

impl SegmenterAdapter {
    pub fn new(
        template: impl Into<String>,
        workdir: impl Into<PathBuf>,
        timeout: Duration,
    ) -> Result<Self> {
        let template = template.into();
        for p in PLACEHOLDERS {
            if !template.contains(p) {
                return Err(Error::AdapterCommand(format!("template is missing `{p}`")));
            }
        }
        if shlex::split(&template).is_none_or(|t| t.is_empty()) {
            return Err(Error::AdapterCommand(format!(
                "cannot tokenize `{template}`"
            )));
        }
        Ok(Self {
            template,
            workdir: workdir.into(),
            timeout,
            tag: "adapter".into(),
            lock: Mutex::new(()),
        })
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// Reads an adapter description: `command` (required), `timeout_secs`
    /// (default 300), `workdir` (default: a directory under the system temp
    /// dir) and `tag` (default `adapter`).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut command = None;
        let mut timeout = 300u64;
        let mut workdir = None;
        let mut tag = None;
        for e in parse_entries(&text, &name)? {
            match e.key.as_str() {
                "command" => command = Some(e.value.clone()),
                "timeout_secs" => timeout = e.parse(&name)?,
                "workdir" => workdir = Some(PathBuf::from(&e.value)),
                "tag" => tag = Some(e.value.clone()),
                other => return Err(e.error(&name, format!("unknown key `{other}`"))),
            }
        }
        let command =
            command.ok_or_else(|| Error::AdapterCommand(format!("{name}: missing `command`")))?;
        let workdir = workdir.unwrap_or_else(|| {
            std::env::temp_dir().join(format!("promptforge-adapter-{}", std::process::id()))
        });
        let adapter = Self::new(command, workdir, Duration::from_secs(timeout))?;
        Ok(match tag {
            Some(t) => adapter.with_tag(t),
            None => adapter,
        })
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }
}

fn drain(mut pipe: impl Read + Send + 'static) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Writes the scheme, runs the adapter command and reads back its mask.
pub fn external_segment(
    adapter: &SegmenterAdapter,
    image_path: &Path,
    scheme: &PromptScheme,
) -> Result<AdapterRun> {
    let _guard = adapter.lock.lock().unwrap_or_else(|e| e.into_inner());
    std::fs::create_dir_all(&adapter.workdir).map_err(|e| Error::io(&adapter.workdir, e))?;
    let run = RUN_COUNTER.fetch_add(1, Ordering::Relaxed);
    let stem = format!("run-{}-{run}", std::process::id());
    let scheme_path = adapter.workdir.join(format!("{stem}.scheme.json"));
    let out_path = adapter.workdir.join(format!("{stem}.mask.pgm"));
    save_prompt_scheme(scheme, &scheme_path)?;
    let _ = std::fs::remove_file(&out_path);

    let substitute = |token: &str| {
        token
            .replace("{image}", &image_path.to_string_lossy())
            .replace("{scheme}", &scheme_path.to_string_lossy())
            .replace("{out}", &out_path.to_string_lossy())
    };
    let tokens: Vec<String> = shlex::split(&adapter.template)
        .expect("validated at construction")
        .iter()
        .map(|t| substitute(t))
        .collect();
    log::debug!("adapter: {tokens:?}");

    let mut child = Command::new(&tokens[0])
        .args(&tokens[1..])
        .current_dir(&adapter.workdir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::AdapterCommand(format!("cannot start `{}`: {e}", tokens[0])))?;
    let stdout = drain(child.stdout.take().expect("piped"));
    let stderr = drain(child.stderr.take().expect("piped"));

    let status = match child.wait_timeout(adapter.timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::AdapterTimeout {
                secs: adapter.timeout.as_secs(),
            });
        }
        Err(e) => return Err(Error::io(&tokens[0], e)),
    };
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    let _ = std::fs::remove_file(&scheme_path);
    if !status.success() {
        return Err(Error::AdapterFailed {
            status: status.to_string(),
            stderr: stderr.trim().to_string(),
        });
    }
    if !out_path.exists() {
        return Err(Error::AdapterOutputMissing(out_path));
    }
    let mask = load_mask(&out_path).map_err(|e| Error::AdapterOutputMalformed(e.to_string()))?;
    let _ = std::fs::remove_file(&out_path);
    let expected = (scheme.width() as usize, scheme.height() as usize);
    if (mask.width(), mask.height()) != expected {
        return Err(Error::dims(
            "adapter mask size",
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    Ok(AdapterRun {
        mask,
        stdout,
        stderr,
    })
}

impl Segmenter for SegmenterAdapter {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn segment(&self, image: Option<&Path>, scheme: &PromptScheme) -> Result<MaskImage> {
        let image = image.ok_or_else(|| {
            Error::AdapterCommand("external segmenter needs a target image".into())
        })?;
        let run = external_segment(self, image, scheme)?;
        if !run.stderr.is_empty() {
            log::debug!("adapter stderr: {}", run.stderr.trim());
        }
        Ok(run.mask)
    }
}
