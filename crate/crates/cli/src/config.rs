//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [problem]
//! m = 5/3
//! domain = 0, 1
//! initial_data = paper-quadratic
//!
//! [discretization]
//! M = 200
//! tau = 1/200
//! t_final = 0.05
//! ```
//!
//! Numbers may be written as fractions (`5/3`). Unknown sections or keys,
//! duplicates and bad values are rejected with the file line.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pme_core::{InitialDataKind, SolverParams64};

const KEYS: &[(&str, &[&str])] = &[
    ("problem", &["m", "domain", "initial_data"]),
    ("discretization", &["M", "tau", "t_final", "A0"]),
    (
        "newton",
        &[
            "tol_lambda",
            "tol_residual",
            "max_iter",
            "lambda_prime",
            "c_newton",
            "eps_switch",
        ],
    ),
    ("study", &["h_list", "reference_M", "t_eval", "m_list"]),
    ("output", &["dir", "snapshot_every"]),
];

#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// The raw document: `section.key -> value` with line numbers.
#[derive(Debug, Clone)]
pub struct Document {
    path: PathBuf,
    entries: HashMap<String, Entry>,
}

pub fn parse_number(text: &str) -> Option<f64> {
    let text = text.trim();
    let v = match text.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            if b == 0.0 {
                return None;
            }
            a / b
        }
        None => text.parse().ok()?,
    };
    v.is_finite().then_some(v)
}

impl Document {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, message: String| ConfigError {
            path: path.to_path_buf(),
            line: Some(line),
            message,
        };
        let mut entries = HashMap::new();
        let mut section: Option<&'static str> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("malformed section header '{content}'")))?
                    .trim();
                let known = KEYS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| err(line, format!("unknown section [{name}]")))?;
                section = Some(known.0);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
            let key = key.trim();
            let sec = section
                .ok_or_else(|| err(line, format!("key '{key}' appears before any [section]")))?;
            let allowed = KEYS
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(err(line, format!("unknown key '{sec}.{key}'")));
            }
            let full = format!("{sec}.{key}");
            if let Some(prev) = entries.get(&full) {
                let prev: &Entry = prev;
                return Err(err(
                    line,
                    format!("duplicate key '{full}' (first set on line {})", prev.line),
                ));
            }
            entries.insert(
                full,
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(Document {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(path, &text)
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.keys().any(|k| k.starts_with(&prefix))
    }

    fn error_at(&self, key: &str, message: String) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: self.entry(key).map(|e| e.line),
            message: format!("key '{key}': {message}"),
        }
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: None,
            message: format!("missing required key '{key}'"),
        }
    }

    fn get<T>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| self.error_at(key, m)),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key, |v| {
            parse_number(v).ok_or_else(|| format!("'{v}' is not a number"))
        })
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        self.get(key, |v| {
            v.parse::<usize>()
                .map_err(|_| format!("'{v}' is not a nonnegative integer"))
        })
    }

    fn number_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key, |v| {
            let items: Vec<f64> = v
                .split(',')
                .map(|t| parse_number(t).ok_or_else(|| format!("'{}' is not a number", t.trim())))
                .collect::<std::result::Result<_, _>>()?;
            if items.is_empty() {
                Err("empty list".into())
            } else {
                Ok(items)
            }
        })
    }

    fn check(&self, key: &str, ok: bool, message: impl FnOnce() -> String) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.error_at(key, message()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Study {
    /// Coarse cell counts derived from `h_list`.
    pub cells: Vec<usize>,
    pub reference_cells: usize,
    pub t_eval: f64,
    pub m_list: Vec<f64>,
}

/// Validated configuration. Command-specific requirements (a study section,
/// a grid size) are checked by the accessors that need them.
#[derive(Debug, Clone)]
pub struct Config {
    doc: Document,
    pub m: Option<f64>,
    pub domain: (f64, f64),
    pub initial_data: InitialDataKind,
    pub cells: Option<usize>,
    pub tau: Option<f64>,
    pub t_final: Option<f64>,
    /// Solver settings with `tau` left at a placeholder.
    pub params: SolverParams64,
    pub output_dir: Option<PathBuf>,
    pub snapshot_every: usize,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_document(Document::load(path)?)
    }

    #[cfg(test)]
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        Self::from_document(Document::parse(path, text)?)
    }

    fn from_document(doc: Document) -> Result<Self> {
        let m = doc.number("problem.m")?;
        if let Some(m) = m {
            doc.check("problem.m", m > 1.0, || {
                format!("exponent must exceed 1, got {m}")
            })?;
        }
        let domain = match doc.number_list("problem.domain")? {
            None => (0.0, 1.0),
            Some(v) => {
                doc.check("problem.domain", v.len() == 2 && v[0] < v[1], || {
                    "expected 'left, right' with left < right".into()
                })?;
                (v[0], v[1])
            }
        };
        let initial_data = doc
            .get("problem.initial_data", |v| {
                v.parse::<InitialDataKind>().map_err(|e| e.to_string())
            })?
            .unwrap_or(InitialDataKind::PaperQuadratic);

        let cells = doc.count("discretization.M")?;
        if let Some(c) = cells {
            doc.check("discretization.M", c >= 2, || {
                format!("need at least 2 cells, got {c}")
            })?;
        }
        let tau = doc.number("discretization.tau")?;
        if let Some(t) = tau {
            doc.check("discretization.tau", t > 0.0, || {
                format!("must be positive, got {t}")
            })?;
        }
        let t_final = doc.number("discretization.t_final")?;
        if let Some(t) = t_final {
            doc.check("discretization.t_final", t >= 0.0, || {
                format!("must be nonnegative, got {t}")
            })?;
        }

        let mut params = SolverParams64::with_tau(1.0);
        let positive = |key: &str, target: &mut f64| -> Result<()> {
            if let Some(v) = doc.number(key)? {
                doc.check(key, v > 0.0, || format!("must be positive, got {v}"))?;
                *target = v;
            }
            Ok(())
        };
        if let Some(v) = doc.number("discretization.A0")? {
            doc.check("discretization.A0", v >= 0.0, || {
                format!("must be nonnegative, got {v}")
            })?;
            params.a0 = v;
        }
        positive("newton.tol_lambda", &mut params.newton_tol_lambda)?;
        positive("newton.tol_residual", &mut params.newton_tol_residual)?;
        positive("newton.c_newton", &mut params.c_newton)?;
        positive("newton.eps_switch", &mut params.eps_switch)?;
        if let Some(v) = doc.number("newton.lambda_prime")? {
            let star = SolverParams64::lambda_star_value();
            doc.check("newton.lambda_prime", v >= star && v < 1.0, || {
                format!("must lie in [{star:.6}, 1), got {v}")
            })?;
            params.lambda_prime = v;
        }
        if let Some(n) = doc.count("newton.max_iter")? {
            doc.check("newton.max_iter", n >= 1, || "must be at least 1".into())?;
            params.newton_max_iter = n;
        }

        let output_dir = doc.get("output.dir", |v| {
            if v.is_empty() {
                Err("empty path".into())
            } else {
                Ok(PathBuf::from(v))
            }
        })?;
        let snapshot_every = doc.count("output.snapshot_every")?.unwrap_or(0);

        Ok(Config {
            doc,
            m,
            domain,
            initial_data,
            cells,
            tau,
            t_final,
            params,
            output_dir,
            snapshot_every,
        })
    }

    pub fn require_m(&self) -> Result<f64> {
        self.m.ok_or_else(|| self.doc.missing("problem.m"))
    }

    pub fn require_cells(&self) -> Result<usize> {
        self.cells
            .ok_or_else(|| self.doc.missing("discretization.M"))
    }

    pub fn require_t_final(&self) -> Result<f64> {
        self.t_final
            .ok_or_else(|| self.doc.missing("discretization.t_final"))
    }

    /// The `[study]` section, with every `h` converted to a cell count.
    pub fn study(&self) -> Result<Study> {
        let doc = &self.doc;
        if !doc.has_section("study") {
            return Err(ConfigError {
                path: doc.path.clone(),
                line: None,
                message: "the convergence command needs a [study] section".into(),
            });
        }
        let length = self.domain.1 - self.domain.0;
        let h_list = doc
            .number_list("study.h_list")?
            .ok_or_else(|| doc.missing("study.h_list"))?;
        let mut cells = Vec::with_capacity(h_list.len());
        for h in h_list {
            doc.check("study.h_list", h > 0.0, || {
                format!("step {h} is not positive")
            })?;
            let n = (length / h).round();
            doc.check(
                "study.h_list",
                n >= 2.0 && ((n * h - length) / length).abs() < 1e-9,
                || format!("step {h} does not divide the domain length {length}"),
            )?;
            cells.push(n as usize);
        }
        let reference_cells = doc
            .count("study.reference_M")?
            .ok_or_else(|| doc.missing("study.reference_M"))?;
        for &c in &cells {
            doc.check("study.reference_M", c > 0 && reference_cells % c == 0 && reference_cells >= c, || {
                format!("{reference_cells} cells is not a refinement of the {c}-cell grid (h = {length}/{c})")
            })?;
        }
        let t_eval = doc
            .number("study.t_eval")?
            .ok_or_else(|| doc.missing("study.t_eval"))?;
        doc.check("study.t_eval", t_eval > 0.0, || {
            format!("must be positive, got {t_eval}")
        })?;
        let m_list = match doc.number_list("study.m_list")? {
            Some(list) => {
                for &m in &list {
                    doc.check("study.m_list", m > 1.0, || {
                        format!("exponent must exceed 1, got {m}")
                    })?;
                }
                list
            }
            None => vec![self.require_m()?],
        };
        Ok(Study {
            cells,
            reference_cells,
            t_eval,
            m_list,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        Config::parse(Path::new("test.cfg"), text)
    }

    #[test]
    fn fractions_and_defaults() {
        let c =
            parse("[problem]\nm = 5/3\n[discretization]\nM = 200\ntau = 1/200\nt_final = 0.05\n")
                .unwrap();
        assert!((c.m.unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.tau, Some(0.005));
        assert_eq!(c.domain, (0.0, 1.0));
        assert_eq!(c.initial_data, InitialDataKind::PaperQuadratic);
        assert_eq!(c.params.a0, 1.0);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = parse("[problem]\nm = 2\n\n[discretization]\nM = -4\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("discretization.M"), "{e}");
        let e = parse("[problem]\nm = 0.5\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse("[problem]\nexponent = 2\n").unwrap_err();
        assert!(
            e.to_string()
                .contains("test.cfg:2: unknown key 'problem.exponent'"),
            "{e}"
        );
        let e = parse("[nope]\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = parse("[problem]\nm = 2\nm = 3\n").unwrap_err();
        assert!(e.message.contains("duplicate"));
    }

    #[test]
    fn study_section_converts_steps() {
        let c = parse(
            "[problem]\nm = 2\n[study]\nh_list = 1/200, 1/400\nreference_M = 1600\nt_eval = 0.05\n",
        )
        .unwrap();
        let s = c.study().unwrap();
        assert_eq!(s.cells, vec![200, 400]);
        assert_eq!(s.m_list, vec![2.0]);
    }

    #[test]
    fn non_nested_reference_is_rejected_at_its_line() {
        let c = parse(
            "[problem]\nm = 2\n[study]\nh_list = 1/800\nreference_M = 10000\nt_eval = 0.05\n",
        )
        .unwrap();
        let e = c.study().unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("study.reference_M"));
    }
}
