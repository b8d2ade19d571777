//! Case configuration files.
//!
//! Line-oriented text with `[section]` headers. Most lines are `key = value`;
//! the `[bc]` section holds one condition per line instead:
//!
//! ```text
//! [mesh]
//! boundary = case1.boundary
//!
//! [pde]
//! pde = heat
//!
//! [bc]
//! T bottom dirichlet 1
//! T top dirichlet param
//!
//! [params]
//! kind = bc_value
//! train = 1 7
//! test = 2 3 4 5 6
//! input = coords interp
//!
//! [train]
//! iterations = 1000
//! batch = 2
//! ```
//!
//! `#` starts a comment. Relative file paths resolve against the config
//! file's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gpfield::GPConfig;
use crate::grid::Edge;
use crate::model::Activation;
use crate::physics::Pde;

use super::{CaseDefinition, EdgeRule, InputChannel, MeshSource, ParamRule, TrainSettings};

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

struct Parser<'a> {
    path: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_string(), line, msg: msg.into() }
    }
}

const SECTIONS: [&str; 5] = ["mesh", "pde", "bc", "params", "train"];

/// Keys of one section with their line numbers; consumed as they are read so
/// leftovers can be reported.
struct Section<'p> {
    name: &'static str,
    entries: HashMap<String, Entry>,
    p: &'p Parser<'p>,
}

impl Section<'_> {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| self.p.err(e.line, format!("{}.{key}: cannot parse `{}`", self.name, e.value))),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<(usize, Vec<f64>)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => {
                let vals = e
                    .value
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| self.p.err(e.line, format!("{}.{key}: bad number `{t}`", self.name))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some((e.line, vals)))
            }
        }
    }

    fn finish(self) -> Result<()> {
        let mut left: Vec<&Entry> = self.entries.values().collect();
        left.sort_by_key(|e| e.line);
        match left.first() {
            Some(e) => {
                let key = self.entries.iter().find(|(_, v)| v.line == e.line).map(|(k, _)| k.as_str()).unwrap_or("?");
                Err(self.p.err(e.line, format!("unknown key `{key}` in [{}]", self.name)))
            }
            None => Ok(()),
        }
    }
}

/// Parse a config file's text. `path` is used in diagnostics and to resolve
/// relative file references.
pub fn parse_config(text: &str, path: &Path) -> Result<CaseDefinition> {
    let path_str = path.display().to_string();
    let p = Parser { path: &path_str };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut keyed: HashMap<&'static str, HashMap<String, Entry>> = HashMap::new();
    let mut bc_lines: Vec<(usize, String)> = Vec::new();
    let mut current: Option<&'static str> = None;
    for (k, raw) in text.lines().enumerate() {
        let ln = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = SECTIONS
                .iter()
                .find(|s| **s == name.trim())
                .ok_or_else(|| p.err(ln, format!("unknown section [{name}]")))?;
            current = Some(name);
            keyed.entry(name).or_default();
            continue;
        }
        let sec = current.ok_or_else(|| p.err(ln, "line outside any [section]"))?;
        if sec == "bc" {
            bc_lines.push((ln, line.to_string()));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| p.err(ln, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let map = keyed.get_mut(sec).unwrap();
        if map.contains_key(&key) {
            return Err(p.err(ln, format!("duplicate key `{key}` in [{sec}]")));
        }
        map.insert(key, Entry { line: ln, value: value.trim().to_string() });
    }
    let mut section = |name: &'static str| Section { name, entries: keyed.remove(name).unwrap_or_default(), p: &p };

    // [pde]
    let mut s = section("pde");
    let pde_entry = s.take("pde").ok_or_else(|| p.err(0, "[pde] needs `pde = heat|poisson|ns`"))?;
    let pde = Pde::from_name(&pde_entry.value)
        .ok_or_else(|| p.err(pde_entry.line, format!("unknown pde `{}`", pde_entry.value)))?;
    let nu: Option<f64> = s.parse("nu")?;
    let inlet = match s.list("inlet")? {
        None => None,
        Some((_, v)) if v.len() == 2 => Some((v[0], v[1])),
        Some((ln, _)) => return Err(p.err(ln, "inlet needs two values")),
    };
    let length: Option<f64> = s.parse("length")?;
    let weights = match s.list("weights")? {
        Some((ln, w)) if w.len() != pde.residual_names().len() => {
            return Err(p.err(ln, format!("{} weights for {} residual channels", w.len(), pde.residual_names().len())))
        }
        Some((_, w)) => w,
        None => vec![1.0; pde.residual_names().len()],
    };
    s.finish()?;
    let fluid = if pde == Pde::NavierStokes {
        let nu = nu.ok_or_else(|| p.err(pde_entry.line, "ns needs `nu`"))?;
        Some(crate::physics::FluidParams::new(nu, inlet.unwrap_or((0.0, 1.0)), length.unwrap_or(1.0))?)
    } else {
        None
    };

    // [mesh]
    let mut s = section("mesh");
    let mut sources = Vec::new();
    if let Some(e) = s.take("boundary") {
        sources.push((e.line, MeshSource::Boundary(resolve(&base, &e.value))));
    }
    if let Some((ln, v)) = s.list("annulus")? {
        if v.len() != 4 {
            return Err(p.err(ln, "annulus = <r_in> <r_out> <n_xi> <n_eta>"));
        }
        sources.push((ln, MeshSource::Annulus { r_in: v[0], r_out: v[1], n_xi: count(&p, ln, v[2])?, n_eta: count(&p, ln, v[3])? }));
    }
    if let Some((ln, v)) = s.list("vessel")? {
        if v.len() != 2 {
            return Err(p.err(ln, "vessel = <n_xi> <n_eta>"));
        }
        sources.push((ln, MeshSource::Vessel { n_xi: count(&p, ln, v[0])?, n_eta: count(&p, ln, v[1])? }));
    }
    let mapping_tol: f64 = s.parse("mapping_tol")?.unwrap_or(1e-10);
    s.finish()?;
    let mesh = match sources.len() {
        1 => sources.pop().unwrap().1,
        0 => return Err(p.err(0, "[mesh] needs one of `boundary`, `annulus`, `vessel`")),
        _ => return Err(p.err(sources[1].0, "more than one mesh source")),
    };

    // [bc]
    let vars = pde.variables();
    let mut rules: Vec<[Option<(usize, EdgeRule)>; 4]> = vec![Default::default(); vars.len()];
    for (ln, line) in &bc_lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(p.err(*ln, "expected `<variable> <edge> <condition> [value]`"));
        }
        let v = vars
            .iter()
            .position(|n| *n == toks[0])
            .ok_or_else(|| p.err(*ln, format!("`{}` is not a variable of {}", toks[0], pde.name())))?;
        let edge = Edge::from_name(toks[1]).ok_or_else(|| p.err(*ln, format!("unknown edge `{}`", toks[1])))?;
        let value = |k: usize| -> Result<f64> {
            let t = toks.get(k).ok_or_else(|| p.err(*ln, "missing value"))?;
            t.parse().map_err(|_| p.err(*ln, format!("bad value `{t}`")))
        };
        let (rule, used) = match toks[2] {
            "dirichlet" if toks.get(3) == Some(&"param") => (EdgeRule::DirichletParam, 4),
            "dirichlet" => (EdgeRule::Dirichlet(value(3)?), 4),
            "neumann" => (EdgeRule::Neumann(value(3)?), 4),
            "periodic" => (EdgeRule::Periodic, 3),
            "outflow" => (EdgeRule::Outflow, 3),
            other => return Err(p.err(*ln, format!("unknown condition `{other}`"))),
        };
        if toks.len() != used {
            return Err(p.err(*ln, format!("unexpected `{}`", toks[used])));
        }
        let slot = &mut rules[v][edge as usize];
        if let Some((first, _)) = slot {
            return Err(p.err(*ln, format!("{} {} already set on line {first}", toks[0], toks[1])));
        }
        *slot = Some((*ln, rule));
    }
    let mut bc = Vec::with_capacity(vars.len());
    for (v, r) in rules.into_iter().enumerate() {
        let mut edges = Vec::with_capacity(4);
        for (e, slot) in r.into_iter().enumerate() {
            match slot {
                Some((_, rule)) => edges.push(rule),
                None => {
                    return Err(p.err(0, format!("[bc] has no condition for {} on the {} edge", vars[v], Edge::ALL[e].name())))
                }
            }
        }
        bc.push([edges[0], edges[1], edges[2], edges[3]]);
    }

    // [params]
    let mut s = section("params");
    let kind = s.take("kind").map(|e| (e.line, e.value)).unwrap_or((0, "fixed".into()));
    let train = s.list("train")?;
    let test = s.list("test")?;
    let input = match s.take("input") {
        None => vec![InputChannel::Coords],
        Some(e) => e
            .value
            .split_whitespace()
            .map(|t| InputChannel::from_name(t).ok_or_else(|| p.err(e.line, format!("unknown input channel `{t}`"))))
            .collect::<Result<Vec<_>>>()?,
    };
    let params = match kind.1.as_str() {
        "fixed" => {
            if let Some((ln, _)) = train.as_ref().or(test.as_ref()) {
                return Err(p.err(*ln, "kind = fixed takes no parameter lists"));
            }
            ParamRule::Fixed
        }
        "bc_value" | "vessel" => {
            let (tl, train) = train.ok_or_else(|| p.err(kind.0, format!("kind = {} needs `train`", kind.1)))?;
            let test = test.map(|t| t.1).unwrap_or_default();
            if train.is_empty() {
                return Err(p.err(tl, "empty training set"));
            }
            if let Some(x) = test.iter().find(|x| train.contains(x)) {
                return Err(p.err(tl, format!("parameter {x} is in both train and test")));
            }
            if kind.1 == "bc_value" {
                ParamRule::BoundaryValue { train, test }
            } else {
                ParamRule::Vessel { train, test }
            }
        }
        "source" => {
            let n_train: usize = s.parse("n_train")?.ok_or_else(|| p.err(kind.0, "kind = source needs `n_train`"))?;
            let n_test: usize = s.parse("n_test")?.unwrap_or(0);
            let seed: u64 = s.parse("source_seed")?.unwrap_or(0);
            let d = GPConfig::default();
            let gp = GPConfig {
                sigma0: s.parse("sigma0")?.unwrap_or(d.sigma0),
                length_scale: s.parse("length_scale")?.unwrap_or(d.length_scale),
                k: s.parse("modes")?.unwrap_or(d.k),
            };
            if n_train == 0 {
                return Err(p.err(kind.0, "empty training set"));
            }
            ParamRule::Source { n_train, n_test, seed, gp }
        }
        other => return Err(p.err(kind.0, format!("unknown parameter kind `{other}`"))),
    };
    s.finish()?;
    check_rule_fits(&p, &params, &mesh, &bc, &input)?;

    // [train]
    let mut s = section("train");
    let d = TrainSettings::default();
    let hidden = match s.list("hidden")? {
        None => d.hidden,
        Some((ln, h)) if h.len() == 3 => [count(&p, ln, h[0])?, count(&p, ln, h[1])?, count(&p, ln, h[2])?],
        Some((ln, _)) => return Err(p.err(ln, "hidden needs three layer widths")),
    };
    let activation = match s.take("activation") {
        None => d.activation,
        Some(e) => Activation::from_name(&e.value).ok_or_else(|| p.err(e.line, format!("unknown activation `{}`", e.value)))?,
    };
    let train = TrainSettings {
        iterations: s.parse("iterations")?.unwrap_or(d.iterations),
        lr: s.parse("lr")?.unwrap_or(d.lr),
        batch: s.parse("batch")?.unwrap_or(d.batch),
        seed: s.parse("seed")?.unwrap_or(d.seed),
        hidden,
        activation,
        checkpoint_every: s.parse("checkpoint_every")?.unwrap_or(d.checkpoint_every),
    };
    s.finish()?;
    if train.batch == 0 {
        return Err(p.err(0, "batch must be at least 1"));
    }

    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into());
    Ok(CaseDefinition { name, mesh, mapping_tol, pde, fluid, weights, bc, params, input, train })
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let f = Path::new(file);
    if f.is_absolute() {
        f.to_path_buf()
    } else {
        base.join(f)
    }
}

fn count(p: &Parser<'_>, line: usize, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(p.err(line, format!("expected a positive whole number, got {v}")))
    }
}

fn check_rule_fits(
    p: &Parser<'_>,
    params: &ParamRule,
    mesh: &MeshSource,
    bc: &[[EdgeRule; 4]],
    input: &[InputChannel],
) -> Result<()> {
    let uses_param = bc.iter().flatten().any(|r| matches!(r, EdgeRule::DirichletParam));
    match params {
        ParamRule::BoundaryValue { .. } if !uses_param => {
            return Err(p.err(0, "kind = bc_value but no `dirichlet param` condition in [bc]"))
        }
        ParamRule::BoundaryValue { .. } => {}
        _ if uses_param => return Err(p.err(0, "`dirichlet param` needs kind = bc_value")),
        _ => {}
    }
    if matches!(params, ParamRule::Vessel { .. }) != matches!(mesh, MeshSource::Vessel { .. }) {
        return Err(p.err(0, "the vessel mesh and kind = vessel go together"));
    }
    if input.contains(&InputChannel::Source) != matches!(params, ParamRule::Source { .. }) {
        return Err(p.err(0, "the source input channel and kind = source go together"));
    }
    if input.is_empty() {
        return Err(p.err(0, "no input channels"));
    }
    Ok(())
}
