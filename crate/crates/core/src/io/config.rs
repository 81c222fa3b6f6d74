//! Line-oriented `section.key = value` configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use crate::analysis::NODAL_SENSITIVITY;
use crate::grid::GridSpec;
use crate::model::{NonlinearityModel, PowerTerm};
use crate::solver::{Init, SolverConfig, StepRule};
use crate::symmetry::{GroupElement, SymmetryConstraint};

#[derive(Clone, Debug, PartialEq)]
pub struct GridSection {
    pub total_dims: usize,
    pub confined_dims: usize,
    pub half_widths: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisSection {
    /// Nodal thresholds relative to `max|u|`.
    pub thresholds: Vec<f64>,
    /// Dipole separations along `y₁`, physical units.
    pub separations: Vec<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            thresholds: NODAL_SENSITIVITY.to_vec(),
            separations: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub slices: bool,
    pub field: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            slices: true,
            field: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid: GridSection,
    pub spec: Arc<GridSpec>,
    pub model: NonlinearityModel,
    pub solver: SolverConfig,
    pub starts: usize,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line; 0 for command-line overrides and whole-file problems.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

const KEYS: &[(&str, bool)] = &[
    ("grid.N", false),
    ("grid.m", false),
    ("grid.L", false),
    ("grid.n", false),
    ("model.term", true),
    ("constraint.kind", false),
    ("constraint.k", false),
    ("constraint.l", false),
    ("constraint.generator", true),
    ("solver.max_iters", false),
    ("solver.grad_tol", false),
    ("solver.step", false),
    ("solver.eta", false),
    ("solver.c1", false),
    ("solver.backtrack", false),
    ("solver.lin_tol", false),
    ("solver.seed", false),
    ("solver.init", false),
    ("solver.init_center", false),
    ("solver.init_width", false),
    ("solver.init_noise", false),
    ("solver.init_path", false),
    ("solver.starts", false),
    ("analysis.thresholds", false),
    ("analysis.separations", false),
    ("output.dir", false),
    ("output.slices", false),
    ("output.field", false),
];

struct Entries {
    values: HashMap<&'static str, Vec<(usize, String)>>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            message: message.into(),
        });
    }

    fn line_of(&self, key: &str) -> usize {
        self.values.get(key).and_then(|v| v.first()).map_or(0, |(l, _)| *l)
    }

    fn get<T: FromStr>(&mut self, key: &'static str) -> Option<T> {
        let (line, raw) = self.values.get(key)?.first()?.clone();
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err(line, format!("{key}: cannot parse `{raw}` as {}", type_name::<T>()));
                None
            }
        }
    }

    fn list<T: FromStr>(&mut self, key: &'static str) -> Option<Vec<T>> {
        let (line, raw) = self.values.get(key)?.first()?.clone();
        let mut out = Vec::new();
        for tok in raw
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            match tok.parse::<T>() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.err(line, format!("{key}: cannot parse `{tok}` as {}", type_name::<T>()));
                    return None;
                }
            }
        }
        if out.is_empty() {
            self.err(line, format!("{key}: empty list"));
            return None;
        }
        Some(out)
    }

    fn required<T: FromStr>(&mut self, key: &'static str) -> Option<T> {
        if !self.values.contains_key(key) {
            self.err(0, format!("missing required key {key}"));
            return None;
        }
        self.get(key)
    }
}

fn type_name<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    match full {
        "f64" => "a number",
        "usize" | "u64" => "a non-negative integer",
        "bool" => "true or false",
        _ => full.rsplit("::").next().unwrap_or(full),
    }
}

fn lex(text: &str, overrides: &[(String, String)]) -> Entries {
    let mut entries = Entries {
        values: HashMap::new(),
        errors: Vec::new(),
    };
    let push = |entries: &mut Entries, line: usize, key: &str, value: &str, replace: bool| {
        let Some(&(name, repeatable)) = KEYS.iter().find(|(k, _)| *k == key) else {
            entries.err(line, format!("unknown key `{key}`"));
            return;
        };
        if value.is_empty() {
            entries.err(line, format!("{key}: missing value"));
            return;
        }
        let slot = entries.values.entry(name).or_default();
        if replace {
            slot.clear();
        } else if !repeatable && !slot.is_empty() {
            let first = slot[0].0;
            entries.err(line, format!("{key} already set on line {first}"));
            return;
        }
        slot.push((line, value.to_string()));
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            entries.err(line, format!("expected `section.key = value`, found `{content}`"));
            continue;
        };
        push(&mut entries, line, key.trim(), value.trim(), false);
    }
    for (key, value) in overrides {
        push(&mut entries, 0, key.trim(), value.trim(), true);
    }
    entries
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_config_with_overrides(text, &[])
}

/// Parses `text`, then replaces every key named in `overrides` (used by sweeps).
pub fn parse_config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigErrors> {
    let mut e = lex(text, overrides);

    let total_dims: Option<usize> = e.required("grid.N");
    let confined_dims: Option<usize> = e.required("grid.m");
    let half_widths: Option<Vec<f64>> = if e.values.contains_key("grid.L") {
        e.list("grid.L")
    } else {
        e.err(0, "missing required key grid.L");
        None
    };
    let points: Option<Vec<usize>> = if e.values.contains_key("grid.n") {
        e.list("grid.n")
    } else {
        e.err(0, "missing required key grid.n");
        None
    };

    let mut grid = None;
    if let (Some(nd), Some(m), Some(l), Some(n)) = (total_dims, confined_dims, half_widths, points) {
        match GridSpec::new(nd, m, &l, &n) {
            Ok(spec) => {
                grid = Some((
                    GridSection {
                        total_dims: nd,
                        confined_dims: m,
                        half_widths: l,
                        points: n,
                    },
                    Arc::new(spec),
                ))
            }
            Err(err) => {
                let msg = err.to_string();
                let key = if msg.contains("m = ") {
                    "grid.m"
                } else if msg.contains("L = ") || msg.contains("half_widths") {
                    "grid.L"
                } else if msg.contains("n = ") || msg.contains("points_per_axis") {
                    "grid.n"
                } else {
                    "grid.N"
                };
                let line = e.line_of(key);
                e.err(line, msg);
            }
        }
    }

    let model = parse_model(&mut e, total_dims);
    let constraint = parse_constraint(&mut e, confined_dims);
    let (solver, starts) = parse_solver(&mut e, constraint.clone());

    if let (Some((_, spec)), Some(c)) = (&grid, &constraint) {
        if let Err(err) = c.validate(spec) {
            let line = e.line_of("constraint.kind");
            e.err(line, err.to_string());
        }
    }

    let mut analysis = AnalysisSection::default();
    if e.values.contains_key("analysis.thresholds") {
        if let Some(t) = e.list::<f64>("analysis.thresholds") {
            if t.iter().any(|&x| !(x >= 0.0)) {
                let line = e.line_of("analysis.thresholds");
                e.err(line, "analysis.thresholds must be >= 0");
            }
            analysis.thresholds = t;
        }
    }
    if e.values.contains_key("analysis.separations") {
        if let Some(s) = e.list::<f64>("analysis.separations") {
            if s.iter().any(|&x| !(x >= 0.0)) {
                let line = e.line_of("analysis.separations");
                e.err(line, "analysis.separations must be >= 0");
            }
            analysis.separations = s;
        }
    }

    let mut output = OutputSection::default();
    if let Some(dir) = e.get::<String>("output.dir") {
        output.dir = Some(PathBuf::from(dir));
    }
    if let Some(b) = e.get("output.slices") {
        output.slices = b;
    }
    if let Some(b) = e.get("output.field") {
        output.field = b;
    }

    if !e.errors.is_empty() {
        let mut errors = e.errors;
        errors.sort_by_key(|x| x.line);
        return Err(ConfigErrors(errors));
    }
    let (grid, spec) = grid.expect("grid parsed without errors");
    Ok(RunConfig {
        grid,
        spec,
        model: model.expect("model parsed without errors"),
        solver: solver.expect("solver parsed without errors"),
        starts,
        analysis,
        output,
    })
}

fn parse_model(e: &mut Entries, total_dims: Option<usize>) -> Option<NonlinearityModel> {
    let Some(lines) = e.values.get("model.term").cloned() else {
        e.err(0, "missing required key model.term");
        return None;
    };
    let mut terms = Vec::new();
    for (line, raw) in &lines {
        let nums: Vec<Result<f64, _>> = raw.split_whitespace().map(str::parse::<f64>).collect();
        match nums.as_slice() {
            [Ok(a), Ok(p)] => terms.push(PowerTerm {
                coefficient: *a,
                exponent: *p,
            }),
            _ => e.err(
                *line,
                format!("model.term: expected `coefficient exponent`, found `{raw}`"),
            ),
        }
    }
    if terms.len() != lines.len() {
        return None;
    }
    let first = lines[0].0;
    let model = match NonlinearityModel::new(terms) {
        Ok(m) => m,
        Err(err) => {
            e.err(first, err.to_string());
            return None;
        }
    };
    if let Some(nd) = total_dims {
        if let Err(err) = model.check_hypotheses(nd).into_result() {
            e.err(first, err.to_string());
            return None;
        }
    }
    Some(model)
}

/// `"-2,1 -1"`: image axes (1-based, signed) then the parity.
fn parse_generator(raw: &str, m: usize) -> Result<(GroupElement, f64), String> {
    let mut parts = raw.split_whitespace();
    let (Some(axes), Some(parity), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("expected `signed-axes parity`, found `{raw}`"));
    };
    let parity: f64 = parity.parse().map_err(|_| format!("parity `{parity}` is not ±1"))?;
    let mut sources = Vec::new();
    let mut signs = Vec::new();
    for tok in axes.split(',') {
        let v: i64 = tok
            .trim()
            .parse()
            .map_err(|_| format!("axis `{tok}` is not an integer"))?;
        if v == 0 || v.unsigned_abs() as usize > m {
            return Err(format!("axis {v} outside 1..={m}"));
        }
        sources.push(v.unsigned_abs() as usize - 1);
        signs.push(v.signum() as f64);
    }
    if sources.len() != m {
        return Err(format!(
            "generator lists {} axes, the confined block has {m}",
            sources.len()
        ));
    }
    let g = GroupElement::signed_permutation(&sources, &signs).map_err(|e| e.to_string())?;
    Ok((g, parity))
}

fn parse_constraint(e: &mut Entries, m: Option<usize>) -> Option<SymmetryConstraint> {
    let kind = e.get::<String>("constraint.kind").unwrap_or_else(|| "full".into());
    let line = e.line_of("constraint.kind");
    match kind.as_str() {
        "full" => Some(SymmetryConstraint::FullSpace),
        "kodd" => match e.values.contains_key("constraint.k") {
            true => e.get::<usize>("constraint.k").map(SymmetryConstraint::KOdd),
            false => {
                e.err(line, "constraint.kind = kodd needs constraint.k");
                None
            }
        },
        "cyclic" => match e.values.contains_key("constraint.l") {
            true => e.get::<usize>("constraint.l").map(SymmetryConstraint::CyclicOdd),
            false => {
                e.err(line, "constraint.kind = cyclic needs constraint.l");
                None
            }
        },
        "ginvariant" => {
            let Some(lines) = e.values.get("constraint.generator").cloned() else {
                e.err(line, "constraint.kind = ginvariant needs constraint.generator");
                return None;
            };
            let m = m?;
            let mut generators = Vec::new();
            let mut parities = Vec::new();
            for (l, raw) in lines {
                match parse_generator(&raw, m) {
                    Ok((g, t)) => {
                        generators.push(g);
                        parities.push(t);
                    }
                    Err(msg) => e.err(l, format!("constraint.generator: {msg}")),
                }
            }
            Some(SymmetryConstraint::GInvariant { generators, parities })
        }
        other => {
            e.err(
                line,
                format!("constraint.kind `{other}` is not one of full, kodd, cyclic, ginvariant"),
            );
            None
        }
    }
}

fn parse_solver(e: &mut Entries, constraint: Option<SymmetryConstraint>) -> (Option<SolverConfig>, usize) {
    let mut c = SolverConfig::default();
    if let Some(v) = e.get("solver.max_iters") {
        c.max_iters = v;
    }
    if let Some(v) = e.get("solver.grad_tol") {
        c.grad_tol = v;
    }
    if let Some(v) = e.get("solver.lin_tol") {
        c.lin_tol = v;
    }
    if let Some(v) = e.get("solver.seed") {
        c.seed = v;
    }
    if let Some(v) = e.get("solver.init_noise") {
        c.init_noise = v;
    }
    let StepRule::Armijo {
        mut eta,
        mut c1,
        mut backtrack,
    } = StepRule::default()
    else {
        unreachable!()
    };
    if let Some(v) = e.get("solver.eta") {
        eta = v;
    }
    if let Some(v) = e.get("solver.c1") {
        c1 = v;
    }
    if let Some(v) = e.get("solver.backtrack") {
        backtrack = v;
    }
    let step_line = e.line_of("solver.step");
    match e.get::<String>("solver.step").as_deref() {
        None | Some("armijo") => c.step_rule = StepRule::Armijo { eta, c1, backtrack },
        Some("fixed") => c.step_rule = StepRule::Fixed(eta),
        Some(other) => e.err(step_line, format!("solver.step `{other}` is not armijo or fixed")),
    }
    let init_line = e.line_of("solver.init");
    match e.get::<String>("solver.init").as_deref() {
        None | Some("gaussian") => {
            let center = if e.values.contains_key("solver.init_center") {
                e.list("solver.init_center").unwrap_or_default()
            } else {
                Vec::new()
            };
            let width = e.get("solver.init_width").unwrap_or(1.0);
            c.init = Init::Gaussian { center, width };
        }
        Some("random") => c.init = Init::Random,
        Some("file") => match e.get::<String>("solver.init_path") {
            Some(p) => c.init = Init::File(PathBuf::from(p)),
            None => e.err(init_line, "solver.init = file needs solver.init_path"),
        },
        Some(other) => e.err(
            init_line,
            format!("solver.init `{other}` is not gaussian, random or file"),
        ),
    }
    let starts = e.get("solver.starts").unwrap_or(1);
    if starts == 0 {
        let line = e.line_of("solver.starts");
        e.err(line, "solver.starts must be >= 1");
    }
    let Some(constraint) = constraint else {
        return (None, starts);
    };
    c.constraint = constraint;
    if let Err(err) = c.validate() {
        let line = [
            "solver.max_iters",
            "solver.grad_tol",
            "solver.lin_tol",
            "solver.eta",
            "solver.c1",
        ]
        .iter()
        .map(|k| e.line_of(k))
        .find(|&l| l > 0)
        .unwrap_or(0);
        e.err(line, err.to_string());
        return (None, starts);
    }
    (Some(c), starts)
}
