//! Acceptance run on the pinned reference configuration: one PASS/FAIL line
//! per criterion, nonzero exit if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use orbitcz::aoi::{verify_almost_orthogonality, verify_aoi, AoiCheck};
use orbitcz::cz::{cz_decompose, maximal_function};
use orbitcz::norms::holder_norm;
use orbitcz::suite::{run_suite_in, Context, Suite, SuiteConfig};
use orbitcz::{stats, Grid, GridFunction, ReflectionGroup, VerificationReport};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict { pass: true, detail: Vec::new() }
    }

    fn fail(&mut self, why: String) {
        self.pass = false;
        self.detail.push(why);
    }

    /// Every named metric must be present and flagged as passing.
    fn require(&mut self, rep: &VerificationReport, names: &[&str]) {
        for name in names {
            let full = format!("{}.{name}", rep.suite);
            match rep.metric(name).or_else(|| rep.metric(&full)) {
                Some(m) if m.pass == Some(true) => {}
                Some(m) => self.fail(format!("{name} = {:.4e} (bound {:?})", m.value, m.bound)),
                None => self.fail(format!("{name} missing")),
            }
        }
    }

    fn exact_zero(&mut self, rep: &VerificationReport, name: &str) {
        match rep.value(name) {
            Some(v) if v == 0.0 => {}
            v => self.fail(format!("{name} = {v:?}, expected exactly 0")),
        }
    }

    fn within(&mut self, took: Duration, limit_s: f64) {
        if took.as_secs_f64() >= limit_s {
            self.fail(format!("took {:.1} s, limit {limit_s} s", took.as_secs_f64()));
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn suite(ctx: &Context, s: Suite) -> (VerificationReport, Duration) {
    let (r, t) = timed(|| run_suite_in(ctx, s));
    (r.unwrap_or_else(|e| panic!("suite {} errored: {e}", s.name())), t)
}

fn group_metric(v: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = suite(ctx, Suite::Group);
    if !rep.all_pass() {
        rep.failures().for_each(|m| v.fail(format!("{} = {:.4e}", m.name, m.value)));
    }
    v.require(&rep, &["order_A1", "order_A1xA1", "order_B2"]);
    v.within(t, 5.0);
    t
}

fn aoi_identities(v: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = timed(|| {
        let fam = ctx.family().expect("family");
        verify_aoi(&fam, &AoiCheck { seed: ctx.config.seed, ..AoiCheck::default() })
    });
    v.require(&rep, &["row_sum_dev", "col_sum_dev", "symmetry_dev", "support_violation", "dk_row_sum_dev", "dk_col_sum_dev"]);
    v.exact_zero(&rep, "support_violation");
    v.within(t, 30.0);
    t
}

fn almost_orthogonality(v: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = timed(|| {
        let fam = ctx.family().expect("family");
        verify_almost_orthogonality(&fam, &AoiCheck { seed: ctx.config.seed, ..AoiCheck::default() })
    });
    v.require(&rep, &["decay_slope"]);
    if let Some(s) = rep.value("decay_slope") {
        v.detail.push(format!("slope {s:.3}"));
    }
    v.within(t, 120.0);
    t
}

fn calderon(v: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = suite(ctx, Suite::Reproduce);
    v.require(
        &rep,
        &[
            "contraction.rm_strictly_decreasing",
            "contraction.rm_norm_last",
            "inversion_error",
            "residual_max",
            "tilde_row_cancellation",
            "tilde_col_cancellation",
        ],
    );
    if rep.value("order") != Some(3.0) {
        v.fail("reproduction not measured at M=3".into());
    }
    v.within(t, 300.0);
    t
}

fn cz_and_weak(v5: &mut Verdict, v6: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = suite(ctx, Suite::Cz);
    if rep.value("runs") != Some(60.0) {
        v5.fail(format!("runs = {:?}, expected 20 × 3", rep.value("runs")));
    }
    v5.require(
        &rep,
        &[
            "reconstruction_max",
            "bad_integral_max",
            "good_invariance_defect_max",
            "good_off_e_excess_max",
            "good_on_e_const_max",
            "cube_measure_const_max",
            "good_l2_const_max",
            "bad_l1_const_max",
            "e_lambda_invariant",
            "whitney_ratio_min",
            "whitney_ratio_max",
        ],
    );
    v5.exact_zero(&rep, "good_off_e_excess_max");
    v5.within(t, 120.0);
    v6.require(&rep, &["weak11_identity.max_ratio", "weak11_identity.growth", "weak11_kernel.max_ratio", "weak11_kernel.growth"]);
    if let Some(m) = rep.value("weak11_kernel.max_ratio") {
        v6.detail.push(format!("kernel max ratio {m:.3}"));
    }
    v6.within(t, 120.0);
    t
}

fn t1(v: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = suite(ctx, Suite::T1);
    v.require(&rep, &["norm_stability", "tf_invariance_defect", "t1.bmo_t1", "t1.bmo_tstar1", "wbp.wbp_const"]);
    if let (Some(b), Some(n)) = (rep.value("t1.bmo_t1"), rep.value("t1.operator_norm")) {
        v.detail.push(format!("bmo(T1)/‖T‖ = {:.3}", b / n));
    }
    v.within(t, 600.0);
    t
}

fn paraproduct(v: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = suite(ctx, Suite::Paraproduct);
    v.require(
        &rep,
        &["constant_symbol", "paraproduct.adjoint_one", "paraproduct.reproduction", "paraproduct_corpus.norm_over_bmo_spread"],
    );
    v.within(t, 300.0);
    t
}

fn holder_besov(v: &mut Verdict, ctx: &Context) -> Duration {
    let (rep, t) = suite(ctx, Suite::Norms);
    v.require(
        &rep,
        &[
            "holder_besov.ratio_min",
            "holder_besov.ratio_max",
            "smoothing.smoothing_i_spread",
            "smoothing.smoothing_ii_spread",
            "smoothing.smoothing_iii_spread",
            "smoothing.smoothing_iv_spread",
        ],
    );
    v.within(t, 120.0);
    t
}

// Classical oracles for the trivial group, written from the definitions.

fn oracle_maximal(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let h = grid.min_spacing();
    let w = grid.weights();
    let dist = |i: usize, j: usize| grid.point(i).iter().zip(grid.point(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let diam = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| dist(i, j)).fold(0.0, f64::max);
    let mut out = vec![0.0f64; n];
    for c in 0..n {
        for m in 1..=((diam / h).ceil() as usize + 1) {
            let r = m as f64 * h;
            let ball: Vec<usize> = (0..n).filter(|&j| dist(c, j) < r - 1e-9 * h).collect();
            let mass: f64 = ball.iter().map(|&j| w[j]).sum();
            let avg = ball.iter().map(|&j| w[j] * f[j].abs()).sum::<f64>() / mass;
            for &j in &ball {
                out[j] = out[j].max(avg);
            }
        }
    }
    out
}

fn oracle_holder(grid: &Grid, f: &[f64], eta: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            if i != j {
                let d = grid.point(i).iter().zip(grid.point(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                best = best.max((f[i] - f[j]).abs() / d.powf(eta));
            }
        }
    }
    best
}

/// Maximal dyadic cubes inside `E` with `dist(Q, Eᶜ) ≥ diam Q`, found by
/// enumerating every cube at every level. Returns `(level, corner, members)`.
fn oracle_whitney(grid: &Grid, e: &[bool]) -> Vec<(u32, Vec<u64>, Vec<usize>)> {
    let n = grid.len();
    let dim = grid.dim();
    let l = grid.half_widths()[0];
    let h = grid.min_spacing();
    let dist = |i: usize, j: usize| grid.point(i).iter().zip(grid.point(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut levels = 0;
    while 2.0 * l / 2f64.powi(levels + 1) >= h - 1e-12 {
        levels += 1;
    }
    let mut taken: Vec<(u32, Vec<u64>, Vec<usize>)> = Vec::new();
    for level in 0..=levels as u32 {
        let side = 2.0 * l / 2f64.powi(level as i32);
        let per_axis = 1u64 << level;
        for code in 0..per_axis.pow(dim as u32) {
            let corner: Vec<u64> = (0..dim).map(|a| (code / per_axis.pow((dim - 1 - a) as u32)) % per_axis).collect();
            if taken.iter().any(|(lv, c, _)| corner.iter().zip(c).all(|(&x, &y)| x >> (level - lv) == y)) {
                continue;
            }
            // half-open cells, with ties on an edge going to the upper cube
            let members: Vec<usize> = (0..n)
                .filter(|&i| {
                    grid.point(i).iter().zip(&corner).all(|(&x, &c)| {
                        let lo = -l + c as f64 * side - 1e-9 * h;
                        x >= lo && x < lo + side
                    })
                })
                .collect();
            if members.is_empty() || !members.iter().all(|&i| e[i]) {
                continue;
            }
            let d = members
                .iter()
                .flat_map(|&i| (0..n).filter(|&j| !e[j]).map(move |j| (i, j)))
                .map(|(i, j)| dist(i, j))
                .fold(f64::INFINITY, f64::min);
            if d >= side * (dim as f64).sqrt() {
                taken.push((level, corner, members));
            }
        }
    }
    taken
}

fn classical(v: &mut Verdict) -> Duration {
    let mut cubes = 0;
    let (_, t) = timed(|| {
        for (dim, n) in [(1usize, 63usize), (2, 7)] {
            let grid = Grid::cube(4.0, n, Arc::new(ReflectionGroup::trivial(dim))).expect("grid");
            for seed in 0..3u64 {
                let mut rng = stats::rng(seed, 99);
                let raw: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let f = GridFunction::new(grid.clone(), raw.clone()).expect("finite");

                let mf = oracle_maximal(&grid, &raw);
                let got = maximal_function(&f);
                let gap = got.values().iter().zip(&mf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if gap > 1e-9 {
                    v.fail(format!("dim {dim} seed {seed}: maximal function off by {gap:.2e}"));
                }

                for eta in [0.25, 0.5, 1.0] {
                    let want = oracle_holder(&grid, &raw, eta);
                    let got = holder_norm(&f, eta).expect("holder").value;
                    if (got - want).abs() > 1e-9 * want.max(1.0) {
                        v.fail(format!("dim {dim} seed {seed}: Hölder η={eta} {got} vs {want}"));
                    }
                }

                let lo = mf.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = mf.iter().cloned().fold(0.0, f64::max);
                for c in [0.25, 0.5, 0.75] {
                    let lambda = lo + c * (hi - lo);
                    let e: Vec<bool> = mf.iter().map(|&m| m > lambda).collect();
                    let mut want = oracle_whitney(&grid, &e);
                    want.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
                    let out = cz_decompose(&f, lambda).expect("cz");
                    let mut have: Vec<_> = out.bad.iter().zip(&out.cube_members).collect();
                    have.sort_by(|a, b| (a.0 .0.level, &a.0 .0.corner).cmp(&(b.0 .0.level, &b.0 .0.corner)));
                    if have.len() != want.len()
                        || have.iter().zip(&want).any(|(h, w)| h.0 .0.level != w.0 || h.0 .0.corner != w.1)
                    {
                        v.fail(format!("dim {dim} seed {seed} c {c}: cubes differ ({} vs {})", have.len(), want.len()));
                        continue;
                    }
                    cubes += want.len();
                    let w = grid.weights();
                    let mut good = raw.clone();
                    let mut gap: f64 = 0.0;
                    for ((_, b), (_, _, members)) in have.iter().map(|x| (x.0 .0.clone(), &x.0 .1)).zip(&want) {
                        let mean = members.iter().map(|&i| w[i] * raw[i]).sum::<f64>() / members.iter().map(|&i| w[i]).sum::<f64>();
                        let mut expect = vec![0.0; grid.len()];
                        for &i in members {
                            expect[i] = raw[i] - mean;
                            good[i] = mean;
                        }
                        gap = gap.max(b.values().iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                    }
                    gap = gap.max(out.good.values().iter().zip(&good).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                    if gap > 1e-9 {
                        v.fail(format!("dim {dim} seed {seed} c {c}: decomposition off by {gap:.2e}"));
                    }
                }
            }
        }
    });
    v.detail.push(format!("{cubes} cubes matched"));
    t
}

fn main() -> ExitCode {
    let ctx = Context::new(SuiteConfig::reference_1d()).expect("reference configuration");
    let mut verdicts: Vec<(usize, &str, Verdict, Duration)> = Vec::new();
    let mut run = |n: usize, title: &'static str, f: &dyn Fn(&mut Verdict, &Context) -> Duration| {
        let mut v = Verdict::new();
        let t = f(&mut v, &ctx);
        verdicts.push((n, title, v, t));
    };
    run(1, "group and orbit metric", &group_metric);
    run(2, "approximation of identity", &aoi_identities);
    run(3, "almost orthogonality", &almost_orthogonality);
    run(4, "Calderón system", &calderon);
    {
        let (mut v5, mut v6) = (Verdict::new(), Verdict::new());
        let t = cz_and_weak(&mut v5, &mut v6, &ctx);
        verdicts.push((5, "CZ decomposition", v5, t));
        verdicts.push((6, "weak (1,1)", v6, t));
    }
    let mut run = |n: usize, title: &'static str, f: &dyn Fn(&mut Verdict, &Context) -> Duration| {
        let mut v = Verdict::new();
        let t = f(&mut v, &ctx);
        verdicts.push((n, title, v, t));
    };
    run(7, "T1 diagnostics", &t1);
    run(8, "paraproduct", &paraproduct);
    run(9, "Hölder/Besov and smoothing", &holder_besov);
    run(10, "classical regression", &|v, _| classical(v));

    let mut failed = 0;
    for (n, title, v, t) in &verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += !v.pass as usize;
        let detail = if v.detail.is_empty() { String::new() } else { format!(": {}", v.detail.join("; ")) };
        println!("criterion {n:>2} {tag} {title} ({:.2} s){detail}", t.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
