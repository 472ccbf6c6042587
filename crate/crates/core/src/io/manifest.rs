//! Line-oriented dataset manifest.
//!
//! ```text
//! # comments and blank lines are ignored
//! patch_size = 20
//! patches_per_class = 800
//! channels = gray            # gray | rgb
//! downsample = 272x205       # WxH | none
//! sampling = random          # random | grid
//! center_mask = false        # restrict random sampling to the middle half
//! subtract_patch_mean = false
//! rule = ratio               # ratio | region
//! positive_class = inflamed
//! seed = 7
//!
//! [class healthy]
//! train = images/h01.png
//! train = images/h02.png mask=masks/h02.png
//! test = images/h40.png
//!
//! [class inflamed]
//! train = images/i01.tif
//! test = images/i40.tif
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::ChannelMode;
use crate::classifier::RuleKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// `patches_per_class` random placements spread over the class images.
    #[default]
    Random,
    /// Every non-overlapping grid patch of every training image.
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub path: PathBuf,
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub name: String,
    pub train: Vec<ImageEntry>,
    pub test: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub classes: Vec<ClassEntry>,
    pub patch_size: usize,
    pub patches_per_class: usize,
    pub channels: ChannelMode,
    pub downsample: Option<(usize, usize)>,
    pub sampling: Sampling,
    pub center_mask: bool,
    /// Remove each patch's mean value before vectorizing.
    pub subtract_patch_mean: bool,
    pub rule: RuleKind,
    pub positive_class: Option<String>,
    pub seed: u64,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            classes: Vec::new(),
            patch_size: 20,
            patches_per_class: 800,
            channels: ChannelMode::Gray,
            downsample: None,
            sampling: Sampling::Random,
            center_mask: false,
            subtract_patch_mean: false,
            rule: RuleKind::Ratio,
            positive_class: None,
            seed: 0,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Manifest {
        line,
        message: format!("invalid value {value:?} for {key}"),
    })
}

impl Manifest {
    /// Parses manifest text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Manifest> {
        let mut m = Manifest::default();
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::Manifest { line, message };
            if let Some(header) = content.strip_prefix('[') {
                let inner = header
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?;
                let name = inner
                    .trim()
                    .strip_prefix("class")
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| err(format!("expected [class <name>], got [{inner}]")))?;
                if m.classes.iter().any(|c| c.name == name) {
                    return Err(err(format!("duplicate class {name}")));
                }
                m.classes.push(ClassEntry {
                    name: name.to_string(),
                    train: Vec::new(),
                    test: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
            if let Some(class) = m.classes.last_mut() {
                match key {
                    "train" => {
                        let mut parts = value.split_whitespace();
                        let path = parts.next().ok_or_else(|| err("empty train path".into()))?;
                        let mut mask = None;
                        for extra in parts {
                            let p = extra
                                .strip_prefix("mask=")
                                .ok_or_else(|| err(format!("unexpected {extra:?}")))?;
                            mask = Some(resolve(p));
                        }
                        class.train.push(ImageEntry {
                            path: resolve(path),
                            mask,
                        });
                    }
                    "test" => class.test.push(resolve(value)),
                    _ => return Err(err(format!("unknown class key {key}"))),
                }
                continue;
            }
            match key {
                "patch_size" => m.patch_size = parse_value(line, key, value)?,
                "patches_per_class" => m.patches_per_class = parse_value(line, key, value)?,
                "channels" => {
                    m.channels = match value {
                        "gray" => ChannelMode::Gray,
                        "rgb" => ChannelMode::Rgb,
                        _ => return Err(err(format!("channels must be gray or rgb, got {value}"))),
                    }
                }
                "downsample" => {
                    m.downsample = if value == "none" {
                        None
                    } else {
                        let (w, h) = value
                            .split_once('x')
                            .ok_or_else(|| err(format!("downsample must be WxH, got {value}")))?;
                        Some((parse_value(line, key, w)?, parse_value(line, key, h)?))
                    }
                }
                "sampling" => {
                    m.sampling = match value {
                        "random" => Sampling::Random,
                        "grid" => Sampling::Grid,
                        _ => return Err(err(format!("sampling must be random or grid, got {value}"))),
                    }
                }
                "center_mask" => m.center_mask = parse_value(line, key, value)?,
                "subtract_patch_mean" => m.subtract_patch_mean = parse_value(line, key, value)?,
                "rule" => {
                    m.rule = match value {
                        "ratio" => RuleKind::Ratio,
                        "region" => RuleKind::Region,
                        _ => return Err(err(format!("rule must be ratio or region, got {value}"))),
                    }
                }
                "positive_class" => m.positive_class = Some(value.to_string()),
                "seed" => m.seed = parse_value(line, key, value)?,
                _ => return Err(err(format!("unknown key {key}"))),
            }
        }
        if m.patch_size < 2 {
            return Err(Error::Manifest {
                line: 0,
                message: format!("patch_size must be >= 2, got {}", m.patch_size),
            });
        }
        Ok(m)
    }

    /// Reads, parses and checks a manifest file: at least one class, every
    /// class has training images, every referenced file exists.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Manifest::parse(&text, base)?;
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Data("manifest declares no classes".into()));
        }
        for class in &self.classes {
            if class.train.is_empty() {
                return Err(Error::Data(format!("class {} has no training images", class.name)));
            }
            let paths = class
                .train
                .iter()
                .flat_map(|e| std::iter::once(&e.path).chain(&e.mask))
                .chain(&class.test);
            for p in paths {
                if !p.exists() {
                    return Err(Error::Data(format!("missing file {}", p.display())));
                }
            }
        }
        if let Some(name) = &self.positive_class {
            if !self.classes.iter().any(|c| &c.name == name) {
                return Err(Error::Data(format!("positive class {name} is not declared")));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Index of the positive class; the last class when unset.
    pub fn positive_index(&self) -> usize {
        self.positive_class
            .as_ref()
            .and_then(|n| self.classes.iter().position(|c| &c.name == n))
            .unwrap_or(self.classes.len().saturating_sub(1))
    }

    /// Renders the manifest with paths relative to `base` where possible.
    pub fn render(&self, base: &Path) -> String {
        let rel = |p: &Path| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/")
        };
        let mut s = String::new();
        let _ = writeln!(s, "patch_size = {}", self.patch_size);
        let _ = writeln!(s, "patches_per_class = {}", self.patches_per_class);
        let _ = writeln!(s, "channels = {}", self.channels.as_str());
        match self.downsample {
            Some((w, h)) => {
                let _ = writeln!(s, "downsample = {w}x{h}");
            }
            None => s.push_str("downsample = none\n"),
        }
        let sampling = match self.sampling {
            Sampling::Random => "random",
            Sampling::Grid => "grid",
        };
        let _ = writeln!(s, "sampling = {sampling}");
        let _ = writeln!(s, "center_mask = {}", self.center_mask);
        let _ = writeln!(s, "subtract_patch_mean = {}", self.subtract_patch_mean);
        let _ = writeln!(s, "rule = {}", self.rule.as_str());
        if let Some(p) = &self.positive_class {
            let _ = writeln!(s, "positive_class = {p}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        for class in &self.classes {
            let _ = writeln!(s, "\n[class {}]", class.name);
            for e in &class.train {
                match &e.mask {
                    Some(m) => {
                        let _ = writeln!(s, "train = {} mask={}", rel(&e.path), rel(m));
                    }
                    None => {
                        let _ = writeln!(s, "train = {}", rel(&e.path));
                    }
                }
            }
            for t in &class.test {
                let _ = writeln!(s, "test = {}", rel(t));
            }
        }
        s
    }
}
