//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarm_relax::fixtures::run1_like_state;
use swarm_relax::harness::{run_sweep, scenario_eps_list, write_rows_csv, Scenario, ScalingResult, SweepSpec};
use swarm_relax::kernels::{MorseParams, VisionParams};
use swarm_relax::polar::{fixed_point_residual, Field, Model, ParticleField, PolarVelocity, SpatialConfig, SyntheticField};
use swarm_relax::relax::{tikhonov_gap, Milestone, Mode, RelaxConfig};
use swarm_relax::roots::{scan_roots, RootConfig};
use swarm_relax::{angle_diff, Vec2};

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sweep(spec: &SweepSpec) -> ScalingResult {
    run_sweep(spec, 1).expect("sweep runs")
}

fn slope_in(r: &ScalingResult, lo: f64, hi: f64) -> (bool, String) {
    match &r.fit {
        Ok(f) => (f.slope >= lo && f.slope <= hi, format!("slope {:.4} in [{lo}, {hi}], n = {}", f.slope, f.n_points)),
        Err(e) => (false, format!("no fit: {e}")),
    }
}

fn rp_layer() -> Outcome {
    let t = Instant::now();
    let r = sweep(&SweepSpec { scenario: Scenario::SyntheticRp, ..Default::default() });
    let (ok, d) = slope_in(&r, 0.60, 0.73);
    let secs = t.elapsed().as_secs_f64();
    outcome(ok && secs < 120.0, format!("{d}, {secs:.1} s (< 120 s)"))
}

fn rn_layer() -> Outcome {
    let t = Instant::now();
    let r = sweep(&SweepSpec { scenario: Scenario::SyntheticRn, ..Default::default() });
    let (ok, d) = slope_in(&r, 0.60, 0.73);
    let collapsed = r.rows.iter().filter(|r| r.failure.as_deref().is_some_and(|f| f.contains("speed collapse"))).count();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ok && collapsed == 0 && secs < 180.0,
        format!("{d}, {collapsed} speed collapses, {secs:.1} s (< 180 s)"),
    )
}

fn terminal_accuracy() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for sc in [Scenario::SyntheticRp, Scenario::SyntheticRn] {
        let r = sweep(&SweepSpec { scenario: sc, ..Default::default() });
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for row in &r.rows {
            match (row.tau, row.final_dist) {
                (Some(tau), Some(d)) => {
                    let thr = row.epsilon.powf(2.0 / 3.0);
                    ok &= d <= thr * (1.0 + 1e-12);
                    lo = lo.min(tau / thr);
                    hi = hi.max(tau / thr);
                }
                _ => ok = false,
            }
        }
        ok &= hi / lo < 10.0;
        parts.push(format!("{}: tau/eps^(2/3) in [{lo:.3}, {hi:.3}], ratio {:.2} (< 10)", sc.name(), hi / lo));
    }
    outcome(ok, parts.join("; "))
}

fn one_d_spec(k: u32, l: u32) -> SweepSpec {
    let mut s = SweepSpec { scenario: Scenario::OneD, auto_extend: true, ..Default::default() };
    s.one_d.k = k;
    s.one_d.l = l;
    s
}

fn one_d_basic() -> Outcome {
    let t = Instant::now();
    let r = sweep(&one_d_spec(1, 1));
    let (ok, d) = slope_in(&r, 0.60, 0.73);
    let secs = t.elapsed().as_secs_f64();
    outcome(ok && secs < 60.0, format!("k = l = 1: {d}, {secs:.1} s (< 60 s)"))
}

fn one_d_general() -> Outcome {
    let r = sweep(&one_d_spec(2, 1));
    let (ok, d) = slope_in(&r, 0.50, 0.64);
    let mut reach = SweepSpec { eps_list: vec![1e-3, 1e-4], ..one_d_spec(1, 2) };
    reach.auto_extend = false;
    let nu = 1.0 / 9.0;
    let rr = sweep(&reach);
    let reached = rr
        .rows
        .iter()
        .all(|row| row.ok() && row.final_dist.is_some_and(|d| d <= row.epsilon.powf(nu) * (1.0 + 1e-12)));
    outcome(ok && reached, format!("k = 2, l = 1: {d}; k = 1, l = 2 reaches eps^(1/9) at 1e-3 and 1e-4: {reached}"))
}

fn r_jump_dichotomy() -> Outcome {
    let eps: Vec<f64> = (0..7).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect();
    let flat = sweep(&SweepSpec { eps_list: eps.clone(), synthetic: Some(SyntheticField::rp_default()), ..Default::default() });
    let ratios: Vec<f64> = flat
        .rows
        .iter()
        .map(|r| r.r_excursion.unwrap_or(f64::INFINITY) / r.epsilon.powf(1.0 / 3.0))
        .collect();
    // The start perturbation alone contributes up to a₃ε ≤ a₃ε^{1/3}(1e-2)^{2/3} ≈ 0.046 a₃.
    let bound = 0.05;
    let flat_ok = ratios.iter().all(|q| *q <= bound);
    let bumped = sweep(&SweepSpec { eps_list: eps, synthetic: Some(SyntheticField::bump_default()), ..Default::default() });
    let first = bumped.rows[0].r_excursion.unwrap_or(0.0);
    let bump_ok = first > 0.0 && bumped.rows.iter().all(|r| r.r_excursion.is_some_and(|x| x >= 0.5 * first));
    let min_bump = bumped.rows.iter().filter_map(|r| r.r_excursion).fold(f64::INFINITY, f64::min);
    outcome(
        flat_ok && bump_ok,
        format!(
            "constant R: max excursion/eps^(1/3) = {:.3e} <= {bound:.3e} over 1e-2..1e-5; bump R: min excursion {min_bump:.4} >= {:.4}",
            ratios.iter().cloned().fold(0.0, f64::max),
            0.5 * first
        ),
    )
}

fn tikhonov() -> Outcome {
    let model = Model::Particles { morse: MorseParams::default(), vision: VisionParams::run_defaults() };
    let roots = RootConfig::default();
    let start = run1_like_state(&model, &roots).expect("fixture state");
    let relax = RelaxConfig::default();
    let gap = |eps| tikhonov_gap(&model, &start, eps, 0.2, 200, &roots, &relax).expect("gap");
    let (g3, g4) = (gap(1e-3), gap(1e-4));
    let q = g3 / g4;
    outcome((5.0..=20.0).contains(&q), format!("err(1e-3) = {g3:.3e}, err(1e-4) = {g4:.3e}, ratio {q:.2} in [5, 20]"))
}

fn random_config(rng: &mut ChaCha8Rng) -> SpatialConfig {
    let n = rng.gen_range(2..=8);
    loop {
        let pts: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let spread = pts
            .iter()
            .enumerate()
            .flat_map(|(i, a)| pts[i + 1..].iter().map(move |b| (*a - *b).norm()))
            .fold(f64::INFINITY, f64::min);
        if spread > 0.1 {
            return SpatialConfig::new(pts).expect("distinct points");
        }
    }
}

/// `-(1/N) Σ K'(|d|) d/|d|` summed directly.
fn direct_force(p: &[Vec2], i: usize, m: &MorseParams) -> Vec2 {
    let n = p.len() as f64;
    let mut f = Vec2::ZERO;
    for (j, xj) in p.iter().enumerate() {
        if j != i {
            let d = p[i] - *xj;
            let r = d.norm();
            let kp = -(m.c_r / m.l_r) * (-r / m.l_r).exp() + (m.c_a / m.l_a) * (-r / m.l_a).exp();
            f = f - d * (kp / r / n);
        }
    }
    f
}

fn isotropic_suite() -> Outcome {
    let morse = MorseParams::default();
    let vision = VisionParams::isotropic();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut root_misses = 0;
    for _ in 0..100 {
        let cfg = random_config(&mut rng);
        let i = rng.gen_range(0..cfg.len());
        let f = ParticleField::new(&cfg, i, morse, vision).expect("field");
        let x = cfg.positions()[i];
        let force = direct_force(cfg.positions(), i, &morse);
        let (mag, th_f) = (force.norm(), force.angle());
        for _ in 0..100 {
            let th = rng.gen_range(-PI..PI);
            worst = worst
                .max((f.h(x, th) - mag * (th_f - th).sin()).abs())
                .max((f.r(x, th) - mag * (th_f - th).cos()).abs())
                .max(((f.h(x, th)).powi(2) + f.r(x, th).powi(2)).sqrt() - mag);
        }
        let v = PolarVelocity::new(mag, th_f).expect("velocity");
        worst = worst.max(fixed_point_residual(&cfg, i, &morse, &vision, v).expect("residual").norm());
        let rs = scan_roots(&f, x, &RootConfig::default()).expect("scan");
        let adm: Vec<_> = rs.roots.iter().filter(|r| r.admissible).collect();
        if adm.len() != 1 || angle_diff(adm[0].theta, th_f).abs() > 1e-10 {
            root_misses += 1;
        }
    }
    outcome(
        worst < 1e-10 && root_misses == 0,
        format!("max closed-form deviation {worst:.2e} (< 1e-10), {root_misses} configs without exactly one admissible root at theta_F"),
    )
}

fn milestones() -> Outcome {
    let r = sweep(&SweepSpec { eps_list: vec![1e-4], ..Default::default() });
    let row = &r.rows[0];
    let bound = 20.0 * 1e-4f64.powf(2.0 / 3.0);
    let Some(ms) = row.milestones else {
        return outcome(false, format!("run failed: {:?}", row.failure));
    };
    let ts: Vec<Option<f64>> = ms.iter().map(|m| if let Milestone::Reached(t) = m { Some(*t) } else { None }).collect();
    let all = ts.iter().all(Option::is_some);
    let ts: Vec<f64> = ts.into_iter().flatten().collect();
    let ordered = ts.windows(2).all(|w| w[0] <= w[1]);
    let below = ts.iter().all(|t| *t < bound);
    outcome(
        all && ordered && below,
        format!("times {:?}, all reached {all}, nondecreasing {ordered}, below {bound:.4e} {below}", ts),
    )
}

fn determinism() -> Outcome {
    let spec = SweepSpec { seed: 42, ..Default::default() };
    let bytes = || {
        let mut buf = Vec::new();
        write_rows_csv(&sweep(&spec).rows, &mut buf).expect("csv");
        buf
    };
    let (a, b) = (bytes(), bytes());
    outcome(!a.is_empty() && a == b, format!("{} CSV bytes, identical {}", a.len(), a == b))
}

fn mode_robustness() -> Outcome {
    let slope = |mode| {
        let r = sweep(&SweepSpec {
            scenario: Scenario::ParticleFixture,
            eps_list: scenario_eps_list(Scenario::ParticleFixture),
            mode,
            ..Default::default()
        });
        r.fit.map(|f| f.slope)
    };
    match (slope(Mode::SingleMoving), slope(Mode::AllMoving)) {
        (Ok(a), Ok(b)) => outcome(
            (a - b).abs() < 0.05,
            format!("particle fixture single-moving {a:.4}, all-moving {b:.4}, difference {:.4} (< 0.05)", (a - b).abs()),
        ),
        (a, b) => outcome(false, format!("fit unavailable: {a:?} / {b:?}")),
    }
}

fn main() {
    let criteria: [Check; 11] = [
        ("1 layer scaling, positive speed", rp_layer),
        ("2 layer scaling, speed dip", rn_layer),
        ("3 terminal accuracy", terminal_accuracy),
        ("4 one-dimensional exponent", one_d_basic),
        ("5 one-dimensional general exponent", one_d_general),
        ("6 speed-jump dichotomy", r_jump_dichotomy),
        ("7 slow-manifold closeness", tikhonov),
        ("8 isotropic oracle suite", isotropic_suite),
        ("9 milestone ordering", milestones),
        ("10 determinism", determinism),
        ("mode robustness", mode_robustness),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
