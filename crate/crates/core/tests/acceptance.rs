//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p geopinn --test acceptance` runs everything (about 15 min
//! with the optimized test profile); `-- 1 2 8` runs a subset.
//!
//! Criteria 5, 6, 7a/b and the Case 5 smoke check train a network and are
//! reported as measurements: a FAIL there is printed but does not fail the
//! test target. Every other criterion is deterministic and fails the target.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use geopinn::cases::{self, build_case, Case, CaseDefinition};
use geopinn::grid::NodeClass;
use geopinn::meshgen::{self, generate_mapping, MappingOptions};
use geopinn::model::ConvNet;
use geopinn::physics::{self, FluidParams};
use geopinn::stencil;
use geopinn::{CurvilinearMesh, ReferenceGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Least-squares slope of log(err) against log(h).
fn slope(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = h.iter().zip(e).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn c1_stencil_order() -> Outcome {
    let sizes = [16usize, 32, 64];
    let mut h = Vec::new();
    // per size: d/dxi interior, d/dxi boundary zone, d/deta interior, d/deta zone
    let mut table = vec![[0.0; 4]; sizes.len()];
    for (s, &n) in sizes.iter().enumerate() {
        let g = ReferenceGrid::unit(n, n).unwrap();
        h.push(g.d_xi);
        let f = g.sample(|a, b| (2.0 * a + b).sin());
        let dx = stencil::d_dxi(&g, &f).unwrap();
        let dy = stencil::d_deta(&g, &f).unwrap();
        for j in 0..n {
            for i in 0..n {
                let (a, b) = (g.xi(i), g.eta(j));
                let k = g.idx(i, j);
                let ex = (dx[k] - 2.0 * (2.0 * a + b).cos()).abs();
                let ey = (dy[k] - (2.0 * a + b).cos()).abs();
                let zone = usize::from(g.node_class(i, j) != NodeClass::Interior);
                table[s][zone] = f64::max(table[s][zone], ex);
                table[s][2 + zone] = f64::max(table[s][2 + zone], ey);
            }
        }
    }
    let slopes: Vec<f64> = (0..4).map(|c| slope(&h, &table.iter().map(|r| r[c]).collect::<Vec<_>>())).collect();
    let pass = slopes[0] >= 3.7 && slopes[2] >= 3.7 && slopes[1] >= 2.7 && slopes[3] >= 2.7;
    outcome(
        pass,
        format!(
            "slopes d/dxi interior {:.2} zone {:.2}, d/deta interior {:.2} zone {:.2} (need 3.7 / 2.7)",
            slopes[0], slopes[1], slopes[2], slopes[3]
        ),
    )
}

/// Independent residual of α x_ξξ − 2β x_ξη + γ x_ηη = 0 (and for y), with
/// plain central differences on unit spacing, divided by 2(α + γ).
fn elliptic_residual(mesh: &CurvilinearMesh) -> f64 {
    let g = mesh.grid;
    let period = g.n_xi - 1;
    let wrap = |i: isize| -> usize {
        if g.periodic_xi {
            i.rem_euclid(period as isize) as usize
        } else {
            i as usize
        }
    };
    let (i_lo, i_hi) = if g.periodic_xi { (0, g.n_xi - 1) } else { (1, g.n_xi - 1) };
    let mut worst: f64 = 0.0;
    for j in 1..g.n_eta - 1 {
        for i in i_lo..i_hi {
            let at = |di: isize, dj: isize| mesh.point(wrap(i as isize + di), (j as isize + dj) as usize);
            let c = at(0, 0);
            let (e, w, n, s) = (at(1, 0), at(-1, 0), at(0, 1), at(0, -1));
            let (ne, nw, se, sw) = (at(1, 1), at(-1, 1), at(1, -1), at(-1, -1));
            let x_xi = (e.0 - w.0) / 2.0;
            let y_xi = (e.1 - w.1) / 2.0;
            let x_eta = (n.0 - s.0) / 2.0;
            let y_eta = (n.1 - s.1) / 2.0;
            let alpha = x_eta * x_eta + y_eta * y_eta;
            let beta = x_xi * x_eta + y_xi * y_eta;
            let gamma = x_xi * x_xi + y_xi * y_xi;
            let r = |p: fn((f64, f64)) -> f64| {
                alpha * (p(e) - 2.0 * p(c) + p(w)) - 2.0 * beta * (p(ne) - p(nw) - p(se) + p(sw)) / 4.0
                    + gamma * (p(n) - 2.0 * p(c) + p(s))
            };
            let scale = 2.0 * (alpha + gamma);
            worst = worst.max((r(|p| p.0) / scale).abs()).max((r(|p| p.1) / scale).abs());
        }
    }
    worst
}

fn c2_mapping() -> Outcome {
    // parallelogram: the exact mapping is affine
    let corners = [(0.0, 0.0), (2.0, 0.3), (2.6, 1.5), (0.6, 1.2)];
    let bc = meshgen::quad_boundary(17, 13, corners);
    let grid = bc.reference_grid().unwrap();
    let mesh = generate_mapping(&bc, &grid, &MappingOptions { tol: 1e-13, ..Default::default() }).unwrap();
    let mut affine_err: f64 = 0.0;
    for j in 0..13 {
        for i in 0..17 {
            let (s, t) = (i as f64 / 16.0, j as f64 / 12.0);
            let x = corners[0].0 + s * (corners[1].0 - corners[0].0) + t * (corners[3].0 - corners[0].0);
            let y = corners[0].1 + s * (corners[1].1 - corners[0].1) + t * (corners[3].1 - corners[0].1);
            let p = mesh.point(i, j);
            affine_err = affine_err.max((p.0 - x).abs()).max((p.1 - y).abs());
        }
    }

    // unit reference square, so ξ and η stay O(1) under refinement
    let annulus = |n: usize| {
        let bc = meshgen::annulus_boundary(n, n, (0.0, 0.0), 0.5, 1.0);
        let grid = ReferenceGrid::unit(n, n).unwrap().periodic_in_xi(true);
        generate_mapping(&bc, &grid, &MappingOptions { tol: 1e-10, ..Default::default() }).unwrap()
    };
    let ann = annulus(32);
    let resid = elliptic_residual(&ann);
    let m = meshgen::compute_metrics(&ann).unwrap();
    // ξ runs counter-clockwise and η outwards, so J < 0 throughout
    let sign = m.jac[0].signum();
    let jmin = m.jac.iter().map(|j| j * sign).fold(f64::INFINITY, f64::min);

    let norms = |n: usize| {
        let mesh = annulus(n);
        let m = meshgen::compute_metrics(&mesh).unwrap();
        let (a, b) = meshgen::verify_inverse_laplacian(&mesh, &m).unwrap();
        a.hypot(b)
    };
    let ratio = norms(17) / norms(33);
    let pass = affine_err <= 1e-10 && resid <= 1e-8 && jmin > 0.0 && ratio >= 4.0;
    outcome(
        pass,
        format!(
            "affine max error {affine_err:.1e}; annulus 32x32 residual {resid:.1e}, min |J| {jmin:.3e} with uniform sign; inverse-Laplacian norms shrink {ratio:.1}x (17 -> 33 nodes)"
        ),
    )
}

fn inline_case(text: &str) -> Case {
    let def = cases::parse_config(text, &data("inline.cfg")).unwrap();
    Case::new(def).unwrap()
}

const GRAD_HEAT: &str = "
[mesh]
annulus = 0.5 1.0 13 7
[pde]
pde = heat
[bc]
T bottom dirichlet 3
T top dirichlet 0
T left periodic
T right periodic
[params]
input = interp
[train]
hidden = 2 3 2
activation = tanh
";

const GRAD_NS: &str = "
[mesh]
vessel = 9 7
[pde]
pde = ns
nu = 0.05
inlet = 0 0.4
length = 1
[bc]
u bottom dirichlet 0
v bottom dirichlet 0.4
p bottom neumann 0
u right dirichlet 0
v right dirichlet 0
p right neumann 0
u top outflow
v top outflow
p top dirichlet 0
u left dirichlet 0
v left dirichlet 0
p left neumann 0
[params]
kind = vessel
train = 0.08
[train]
hidden = 2 3 2
activation = tanh
";

const GRAD_POISSON: &str = "
[mesh]
boundary = case5.boundary
[pde]
pde = poisson
[bc]
T bottom dirichlet 10
T right dirichlet 10
T top dirichlet 10
T left dirichlet 10
[params]
kind = source
n_train = 1
n_test = 0
input = source
[train]
hidden = 2 3 2
activation = tanh
";

// tanh keeps the loss smooth: a zero bias feeding a dead ReLU channel sits
// exactly on the kink, where central differences are meaningless.
fn c3_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut per_pde = Vec::new();
    for (name, text) in [("heat", GRAD_HEAT), ("ns", GRAD_NS), ("poisson", GRAD_POISSON)] {
        let case = inline_case(text);
        let inst = &case.train[0];
        let mut net = ConvNet::initialized(case.net_config(), 5).unwrap();
        let loss_of = |net: &ConvNet| {
            let raw = net.predict(&inst.input).unwrap();
            inst.problem.loss_and_gradient(&raw, inst.source.as_deref(), 1.0).unwrap().loss
        };
        let raw = net.forward(&inst.input).unwrap();
        let sl = inst.problem.loss_and_gradient(&raw, inst.source.as_deref(), 1.0).unwrap();
        let grads = net.backward(&sl.grad).unwrap();
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let mut worst_here: f64 = 0.0;
        for _ in 0..8 {
            let t = rng.random_range(0..shapes.len());
            let k = rng.random_range(0..shapes[t]);
            let w0 = net.params()[t][k];
            let h = 1e-5 * w0.abs().max(1e-2);
            let mut plus = net.clone();
            plus.params_mut()[t][k] = w0 + h;
            let mut minus = net.clone();
            minus.params_mut()[t][k] = w0 - h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let g = grads[t][k];
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-12 * sl.loss);
            worst_here = worst_here.max(rel);
            checked += 1;
        }
        per_pde.push(format!("{name} {worst_here:.1e}"));
        worst = worst.max(worst_here);
    }
    outcome(worst <= 1e-5 && checked >= 20, format!("{checked} parameters, worst relative error {}", per_pde.join(", ")))
}

fn c4_hard_bc() -> Outcome {
    let case = build_case(&data("case2_re20.cfg")).unwrap();
    let mut t = cases::Trainer::new(&case, 0).unwrap();
    let (mut exact, mut worst_neumann) = (true, 0.0f64);
    for _ in 0..100 {
        let r = t.step().unwrap();
        for (f, &m) in r.fields.iter().zip(&r.members) {
            for (c, e) in case.train[m].problem.enforcers.iter().enumerate() {
                let ch = f.channel(c);
                exact &= e.dirichlet_nodes().iter().all(|&(k, v)| ch[k].to_bits() == v.to_bits());
                if e.has_neumann() {
                    worst_neumann = worst_neumann.max(e.neumann_residual(ch));
                }
            }
        }
    }
    outcome(
        exact && worst_neumann <= 1e-12,
        format!("Case 2, 100 iterations: Dirichlet bitwise exact = {exact}, worst Neumann residual {worst_neumann:.1e}"),
    )
}

fn train_and_score(case: &Case, seed: u64) -> (cases::TrainOutcome, Vec<f64>) {
    let out = cases::train(case, seed, None, |_| {}).unwrap();
    let all: Vec<&cases::Instance> = case.train.iter().chain(&case.test).collect();
    let rows = cases::evaluate(&out.checkpoint.net, &all).unwrap();
    (out, rows.iter().map(|r| r.error.unwrap()).collect())
}

fn c5_case1() -> Outcome {
    let case = build_case(&data("case1.cfg")).unwrap();
    let (out, errs) = train_and_score(&case, case.def.train.seed);
    let l = out.history.losses();
    outcome(
        errs[0] <= 0.15,
        format!("relative error {:.4} (need <= 0.15); loss {:.3e} -> {:.3e}", errs[0], l[0], l[l.len() - 1]),
    )
}

/// Criteria 6 and 9 share the Case 3 runs.
fn c6_c9_case3() -> (Outcome, Outcome) {
    let case = build_case(&data("case3.cfg")).unwrap();
    let seed = case.def.train.seed;
    let (a, errs) = train_and_score(&case, seed);
    let labels: Vec<String> = case.train.iter().chain(&case.test).map(|i| i.param.label()).collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let listing: Vec<String> = labels.iter().zip(&errs).map(|(l, e)| format!("{l}:{e:.3}")).collect();
    let c6 = outcome(worst <= 0.10, format!("T_in errors {} (need all <= 0.10)", listing.join(" ")));

    let b = cases::train(&case, seed, None, |_| {}).unwrap();
    let same_ckpt = a.checkpoint.to_bytes() == b.checkpoint.to_bytes();
    let same_hist = a.history.to_csv() == b.history.to_csv();
    let c9 = outcome(
        same_ckpt && same_hist,
        format!("Case 3 twice with seed {seed}: checkpoints identical = {same_ckpt}, histories identical = {same_hist}"),
    );
    (c6, c9)
}

/// Plane Poiseuille flow on a stretched channel mesh; max interior NS residual.
fn poiseuille_residual(n: usize) -> f64 {
    let (nu, vmax) = (0.05, 1.0);
    let grid = ReferenceGrid::unit(n, n).unwrap();
    let mesh = CurvilinearMesh::from_fn(grid, |a, b| {
        let s = a - 0.5;
        (s + 0.1 * s * (1.0 - 4.0 * s * s), 2.0 * b + 0.1 * (PI * b).sin())
    });
    let m = meshgen::compute_metrics(&mesh).unwrap();
    let u = vec![0.0; mesh.x.len()];
    let v: Vec<f64> = mesh.x.iter().map(|x| vmax * (1.0 - 4.0 * x * x)).collect();
    let p: Vec<f64> = mesh.y.iter().map(|y| -8.0 * nu * vmax * y).collect();
    let fl = FluidParams::new(nu, (0.0, vmax), 1.0).unwrap();
    let r = physics::ns_residual(&u, &v, &p, &fl, &m).unwrap();
    let mask = grid.loss_mask();
    r.values.chunks(grid.len()).flat_map(|c| c.iter().zip(&mask).filter(|(_, &k)| k).map(|(x, _)| x.abs())).fold(0.0, f64::max)
}

fn c7_poiseuille() -> Outcome {
    let sizes = [17usize, 33, 65];
    let h: Vec<f64> = sizes.iter().map(|&n| 1.0 / (n - 1) as f64).collect();
    let e: Vec<f64> = sizes.iter().map(|&n| poiseuille_residual(n)).collect();
    let order = slope(&h, &e);
    outcome(order >= 2.0, format!("(c) Poiseuille residual {:.2e} {:.2e} {:.2e}, order {order:.2}", e[0], e[1], e[2]))
}

fn c7_case2_training() -> Outcome {
    let case = build_case(&data("case2_re20.cfg")).unwrap();
    let out = cases::train(&case, case.def.train.seed, None, |_| {}).unwrap();
    let rows = &out.history.rows;
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let orders = (first.1 / last.1).log10();
    let cont = last.2[0] / first.2[0];
    outcome(
        orders >= 3.0 && cont <= 1e-2,
        format!(
            "(a) loss {:.3e} -> {:.3e}, {orders:.2} orders (need 3); (b) continuity ratio {cont:.2e} (need <= 1e-2); {} iterations",
            first.1, last.1, rows.len()
        ),
    )
}

fn c8_energy() -> Outcome {
    let case = build_case(&data("case5_smoke.cfg")).unwrap();
    let b = case.basis().unwrap();
    let g = case.train[0].mesh.grid;
    outcome(
        b.energy_fraction >= 0.99 && (g.n_xi, g.n_eta) == (30, 30) && b.k() == 10,
        format!("{}x{} mesh, k = {}: energy fraction {:.5} (need >= 0.99)", g.n_xi, g.n_eta, b.k(), b.energy_fraction),
    )
}

/// Loss decay judged on five equal windows; single iterations are minibatch noise.
fn c8_smoke() -> Outcome {
    let def = CaseDefinition::read(&data("case5_smoke.cfg")).unwrap();
    let case = Case::new(def).unwrap();
    let out = cases::train(&case, case.def.train.seed, None, |_| {}).unwrap();
    let l = out.history.losses();
    let w = l.len() / 5;
    let means: Vec<f64> = l.chunks_exact(w).map(|c| c.iter().sum::<f64>() / w as f64).collect();
    let monotone = means.windows(2).all(|p| p[1] <= p[0]);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.3e}")).collect();
    outcome(monotone, format!("smoke run window means {}", shown.join(" ")))
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |c: u32| wanted.is_empty() || wanted.contains(&c);
    let mut hard_fail = false;
    let mut report = |label: &str, budget_s: f64, hard: bool, t0: Instant, o: Outcome| {
        let secs = t0.elapsed().as_secs_f64();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let kind = if hard { "" } else { " [training target]" };
        let budget = if budget_s.is_finite() { format!("budget {budget_s}s") } else { "no time budget".into() };
        println!("{verdict} {label}: {} [{secs:.1}s, {budget}]{kind}", o.detail);
        if hard && !o.pass {
            hard_fail = true;
        }
    };

    if on(1) {
        let t = Instant::now();
        report("1 stencil order", 1.0, true, t, c1_stencil_order());
    }
    if on(2) {
        let t = Instant::now();
        report("2 mapping", 10.0, true, t, c2_mapping());
    }
    if on(3) {
        let t = Instant::now();
        report("3 gradient check", 30.0, true, t, c3_gradient_check());
    }
    if on(4) {
        let t = Instant::now();
        report("4 hard boundary conditions", f64::INFINITY, true, t, c4_hard_bc());
    }
    if on(5) {
        let t = Instant::now();
        report("5 Case 1", 600.0, false, t, c5_case1());
    }
    if on(6) || on(9) {
        let t = Instant::now();
        let (c6, c9) = c6_c9_case3();
        report("6 Case 3", 600.0, false, t, c6);
        report("9 determinism", 600.0, true, t, c9);
    }
    if on(7) {
        let t = Instant::now();
        report("7 Case 2 manufactured flow", 3600.0, true, t, c7_poiseuille());
        let t = Instant::now();
        report("7 Case 2 training", 3600.0, false, t, c7_case2_training());
    }
    if on(8) {
        let t = Instant::now();
        report("8 K-L energy", 5.0, true, t, c8_energy());
        let t = Instant::now();
        report("8 Case 5 smoke", f64::INFINITY, false, t, c8_smoke());
    }
    if hard_fail {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
