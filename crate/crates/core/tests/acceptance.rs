//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit
//! if any criterion failed. Tolerances and runtime limits are fixed below.

mod common;

use std::time::{Duration, Instant};

use common::*;
use hbtc_core::admm::{init_state, write_trace_csv};
use hbtc_core::hankel::{hankel_adjoint, hankelize, nuclear_norm, singular_values, svt};
use hbtc_core::updaters::gn::{jacobian, pack, residual, unpack};
use hbtc_core::updaters::{als_update_a, als_update_b, als_update_c};
use hbtc_core::{
    generate, rlne, solve, Backend, BlockStructure, BtdFactors, Complex64, ComplexTensor3, GenConfig, Method,
    ObservationMask, Observations, SolverConfig, SweepSpec, SweptVariable,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rand_structure<R: Rng>(rng: &mut R, max_blocks: usize, max_len: usize) -> BlockStructure {
    let blocks = rng.random_range(1..=max_blocks);
    BlockStructure::new((0..blocks).map(|_| rng.random_range(1..=max_len)).collect()).unwrap()
}

fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn c1_hankel_adjoint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for t in 0..1000 {
        let n = 2 + t % 49;
        let u: Vec<Complex64> = (0..n).map(|_| rand_c(&mut rng)).collect();
        let h = hankelize(&u).unwrap();
        let x = rand_mat(&mut rng, h.nrows(), h.ncols());
        let lhs = dot(h.as_slice(), x.as_slice());
        let rhs = dot(&u, &hankel_adjoint(&x));
        let scale = h.norm() * x.norm();
        worst = worst.max((lhs.re - rhs.re).abs() / scale).max((lhs.im - rhs.im).abs() / scale);
    }
    outcome(worst <= 1e-12, format!("worst relative gap {worst:.2e} (tol 1e-12)"))
}

fn c2_svt_prox() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_sv: f64 = 0.0;
    let mut beaten = 0usize;
    let prox_objective = |z: &DMatrix<Complex64>, x: &DMatrix<Complex64>, tau: f64| {
        tau * nuclear_norm(z).unwrap() + 0.5 * (z - x).norm_squared()
    };
    for t in 0..200 {
        let (m, n) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let x = rand_mat(&mut rng, m, n);
        let tau = 10f64.powf(-3.0 + 4.0 * t as f64 / 199.0);
        let z = svt(&x, tau).unwrap();
        let sx = singular_values(&x).unwrap();
        let sz = singular_values(&z).unwrap();
        for (a, b) in sx.iter().zip(&sz) {
            worst_sv = worst_sv.max((b - (a - tau).max(0.0)).abs() / (1.0 + sx[0]));
        }
        let best = prox_objective(&z, &x, tau);
        for p in 0..1000 {
            let eps = 10f64.powf(-6.0 + 6.0 * p as f64 / 999.0);
            let dz = rand_mat(&mut rng, m, n) * Complex64::new(eps, 0.0);
            if prox_objective(&(&z + dz), &x, tau) < best {
                beaten += 1;
            }
        }
    }
    outcome(
        worst_sv <= 1e-10 && beaten == 0,
        format!("worst singular value gap {worst_sv:.2e} (tol 1e-10), perturbations beating output {beaten}/200000"),
    )
}

fn c3_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dims = (rng.random_range(1..=6), rng.random_range(2..=6), rng.random_range(2..=6));
        let s = rand_structure(&mut rng, 3, 3);
        let f = rand_factors(&mut rng, dims, &s);
        let t = f.reconstruct();
        let reference = ComplexTensor3::from_fn(dims, |i, j, k| entry_ref(&f, i, j, k)).unwrap();
        worst = worst.max(t.distance(&reference).unwrap() / reference.frobenius_norm());
    }
    outcome(worst <= 1e-12, format!("worst relative error {worst:.2e} (tol 1e-12)"))
}

/// Central-difference gradient norm of `g` over one factor block.
fn fd_grad_norm(
    y: &ComplexTensor3,
    mask: &ObservationMask,
    state: &hbtc_core::AdmmState,
    block: usize,
) -> f64 {
    let f = &state.factors;
    let target = [f.a(), f.b(), f.c()][block].clone();
    let with = |m: DMatrix<Complex64>| -> BtdFactors {
        let (a, b, c) = match block {
            0 => (m, f.b().clone(), f.c().clone()),
            1 => (f.a().clone(), m, f.c().clone()),
            _ => (f.a().clone(), f.b().clone(), m),
        };
        BtdFactors::new(a, b, c, f.structure().clone()).unwrap()
    };
    let mut sq = 0.0;
    for idx in 0..target.len() {
        for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let h = 1e-5 * (1.0 + target[idx].norm());
            let mut plus = target.clone();
            plus[idx] += dir * h;
            let mut minus = target.clone();
            minus[idx] -= dir * h;
            let d = (g_ref(y, mask, state, &with(plus)) - g_ref(y, mask, state, &with(minus))) / (2.0 * h);
            sq += d * d;
        }
    }
    sq.sqrt()
}

fn c4_als_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    let mut increases = 0;
    for _ in 0..100 {
        let dims = (rng.random_range(2..=6), rng.random_range(2..=6), rng.random_range(2..=6));
        let s = rand_structure(&mut rng, 3, 2);
        let (lambda, beta) = (rng.random_range(0.1..10.0), rng.random_range(0.01..10.0));
        let (y, mask, mut state) = rand_problem(&mut rng, dims, &s, lambda, beta);
        let obs = Observations::new(&y, &mask).unwrap();
        let mut g_prev = g_ref(&y, &mask, &state, &state.factors);
        for block in 0..3 {
            let f = &state.factors;
            let (a, b, c) = match block {
                0 => (als_update_a(&obs, &state).unwrap(), f.b().clone(), f.c().clone()),
                1 => (f.a().clone(), als_update_b(&obs, &state).unwrap(), f.c().clone()),
                _ => (f.a().clone(), f.b().clone(), als_update_c(&obs, &state).unwrap()),
            };
            state.factors = BtdFactors::new(a, b, c, s.clone()).unwrap();
            let block_norm = [state.factors.a(), state.factors.b(), state.factors.c()][block].norm();
            worst = worst.max(fd_grad_norm(&y, &mask, &state, block) / (1.0 + block_norm));
            let g = g_ref(&y, &mask, &state, &state.factors);
            if g > g_prev * (1.0 + 1e-12) {
                increases += 1;
            }
            g_prev = g;
        }
    }
    outcome(
        worst <= 1e-6 && increases == 0,
        format!("worst gradient {worst:.2e}·(1+‖block‖) (tol 1e-6), g increases {increases}"),
    )
}

fn c5_gn_jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dims = (rng.random_range(2..=5), rng.random_range(2..=5), rng.random_range(2..=5));
        let s = rand_structure(&mut rng, 3, 2);
        let (y, mask, state) = rand_problem(&mut rng, dims, &s, 1.0, 1.0);
        let obs = Observations::new(&y, &mask).unwrap();
        let f = &state.factors;
        let analytic = jacobian(&obs, f).to_dense();
        let z = pack(f);
        let mut fd = DMatrix::<f64>::zeros(analytic.nrows(), analytic.ncols());
        for p in 0..z.len() {
            let h = 1e-6 * (1.0 + z[p].abs());
            let mut zp = z.clone();
            zp[p] += h;
            let mut zm = z.clone();
            zm[p] -= h;
            let rp = residual(&obs, &unpack(&zp, f).unwrap());
            let rm = residual(&obs, &unpack(&zm, f).unwrap());
            for e in 0..rp.len() {
                fd[(e, p)] = (rp[e] - rm[e]) / (2.0 * h);
            }
        }
        worst = worst.max((&analytic - &fd).norm() / analytic.norm());
    }
    outcome(worst <= 1e-5, format!("worst relative error {worst:.2e} (tol 1e-5)"))
}

/// One solve: RLNE against the clean tensor (1 on abort) and whether the
/// final `f1` is at most the initial one.
struct Run {
    rlne: f64,
    f1_ok: bool,
    aborted: bool,
}

fn run(truth: &hbtc_core::GroundTruth, structure: &BlockStructure, config: &SolverConfig) -> Run {
    let obs = Observations::new(&truth.noisy, &truth.mask).unwrap();
    let f1_init = init_state(&truth.noisy, &truth.mask, structure, config).map(|s| s.factors.observed_sq_error(&obs));
    match (solve(&truth.noisy, &truth.mask, structure, config), f1_init) {
        (Ok(report), Ok(f1_init)) => Run {
            rlne: rlne(&report.completed, &truth.clean).unwrap(),
            f1_ok: report.trace.last().is_none_or(|r| r.f1 <= f1_init),
            aborted: false,
        },
        _ => Run { rlne: 1.0, f1_ok: true, aborted: true },
    }
}

/// Per-trial RLNE of `method` at one swept value, keeping the best λ of
/// `grid`. Trial `t` uses seed `gen.seed + t`, as the sweep harness does.
struct Cell {
    rlne: Vec<f64>,
    f1_violations: usize,
    aborts: usize,
}

fn cell(spec: &SweepSpec, value: f64, method: Method, grid: &[f64]) -> Cell {
    let mut out = Cell { rlne: Vec::new(), f1_violations: 0, aborts: 0 };
    for trial in 0..spec.trials {
        let (gen, solver) = spec.configs_at(value, trial);
        let truth = generate(&gen).unwrap();
        let structure = method.structure(&gen.structure).unwrap();
        let mut best = f64::INFINITY;
        for &lambda in grid {
            let r = run(&truth, &structure, &SolverConfig { lambda, backend: method.backend(), ..solver.clone() });
            out.f1_violations += usize::from(!r.f1_ok);
            out.aborts += usize::from(r.aborted);
            best = best.min(r.rlne);
        }
        out.rlne.push(best);
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn spec(swept: SweptVariable, gen: GenConfig, trials: usize) -> SweepSpec {
    SweepSpec {
        swept,
        values: vec![],
        trials,
        gen,
        solver: SolverConfig::default(),
        methods: vec![Method::BtdAls],
        lambda_grid: None,
        record_timing: false,
    }
}

const LAMBDA_GRID: [f64; 3] = [0.1, 1.0, 10.0];

fn c6_noiseless_recovery() -> Outcome {
    let gen = GenConfig {
        dims: (20, 20, 20),
        structure: BlockStructure::new(vec![2, 2]).unwrap(),
        snr_db: f64::INFINITY,
        sample_ratio: 0.4,
        ..GenConfig::default()
    };
    let mut s = spec(SweptVariable::SnrDb, gen, 10);
    s.solver.max_iterations = 300;
    let c = cell(&s, f64::INFINITY, Method::BtdAls, &[10.0]);
    let good = c.rlne.iter().filter(|&&e| e < 1e-3).count();
    let worst = c.rlne.iter().copied().fold(0.0, f64::max);
    outcome(
        good >= 9 && c.f1_violations == 0,
        format!("{good}/10 seeds below 1e-3 (need 9), worst {worst:.2e}, f1 violations {}", c.f1_violations),
    )
}

fn c7_c8_snr_trend() -> (Outcome, Outcome) {
    let s = spec(SweptVariable::SnrDb, GenConfig::default(), 10);
    let cells: Vec<Cell> = [-5.0, 10.0, 25.0].iter().map(|&v| cell(&s, v, Method::BtdAls, &LAMBDA_GRID)).collect();
    let means: Vec<f64> = cells.iter().map(|c| mean(&c.rlne)).collect();
    let f1v: usize = cells.iter().map(|c| c.f1_violations).sum();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let c7 = outcome(
        decreasing && means[2] < 0.2 && f1v == 0,
        format!(
            "mean RLNE at -5/10/25 dB: {:.4} / {:.4} / {:.4} (strictly decreasing, last < 0.2), f1 violations {f1v}",
            means[0], means[1], means[2]
        ),
    );

    let cpd = cell(&s, 25.0, Method::CpdAls, &LAMBDA_GRID);
    let (btd_mean, cpd_mean) = (means[2], mean(&cpd.rlne));
    let c8 = outcome(
        btd_mean <= cpd_mean && cpd.f1_violations == 0,
        format!("25 dB: BTD_ALS {btd_mean:.4} vs CPD_ALS (F=9) {cpd_mean:.4}, f1 violations {}", cpd.f1_violations),
    );
    (c7, c8)
}

fn c9_sampling_trend() -> Outcome {
    let s = spec(SweptVariable::SampleRatio, GenConfig { snr_db: 20.0, ..GenConfig::default() }, 10);
    let cells: Vec<Cell> = [0.05, 0.10, 0.15].iter().map(|&v| cell(&s, v, Method::BtdAls, &[1.0])).collect();
    let means: Vec<f64> = cells.iter().map(|c| mean(&c.rlne)).collect();
    let f1v: usize = cells.iter().map(|c| c.f1_violations).sum();
    outcome(
        means.windows(2).all(|w| w[1] <= w[0]) && f1v == 0,
        format!(
            "mean RLNE at 5/10/15%: {:.4} / {:.4} / {:.4} (non-increasing), f1 violations {f1v}",
            means[0], means[1], means[2]
        ),
    )
}

fn c10_csi() -> Outcome {
    let s = spec(SweptVariable::SnrDb, GenConfig::csi_default(), 5);
    let btd = cell(&s, 25.0, Method::BtdAls, &[0.1]);
    let cpd = cell(&s, 25.0, Method::CpdAls, &[0.1]);
    let (bm, cm) = (mean(&btd.rlne), mean(&cpd.rlne));
    let paired_wins = btd.rlne.iter().zip(&cpd.rlne).filter(|(b, c)| b <= c).count();
    let aborts = btd.aborts + cpd.aborts;
    let f1v = btd.f1_violations + cpd.f1_violations;
    outcome(
        aborts == 0 && bm < 0.5 && bm <= cm && f1v == 0,
        format!(
            "mean RLNE BTD {bm:.4} (< 0.5) vs CPD {cm:.4}, BTD no worse on {paired_wins}/5 seeds, aborts {aborts}, f1 violations {f1v}"
        ),
    )
}

fn c11_determinism() -> Outcome {
    let truth = generate(&GenConfig { dims: (10, 12, 14), seed: 11, ..GenConfig::default() }).unwrap();
    let mut worst: f64 = 0.0;
    let mut same_csv = true;
    for backend in [Backend::Als, Backend::Gn] {
        let config = SolverConfig { max_iterations: 60, backend, seed: 11, ..SolverConfig::default() };
        let traces: Vec<_> = (0..2)
            .map(|_| solve(&truth.noisy, &truth.mask, truth.factors.structure(), &config).unwrap().trace)
            .collect();
        let csv: Vec<Vec<u8>> = traces
            .iter()
            .map(|t| {
                let mut buf = Vec::new();
                write_trace_csv(t, &mut buf).unwrap();
                buf
            })
            .collect();
        same_csv &= csv[0] == csv[1] && traces[0].len() == traces[1].len();
        for (a, b) in traces[0].iter().zip(&traces[1]) {
            for (x, y) in [(a.f1, b.f1), (a.f2, b.f2), (a.f_lag, b.f_lag), (a.beta, b.beta), (a.rel_change, b.rel_change)] {
                worst = worst.max((x - y).abs() / (1.0 + x.abs()));
            }
        }
    }
    outcome(
        same_csv && worst <= 1e-10,
        format!("trace CSV identical: {same_csv}, worst field gap {worst:.2e} (tol 1e-10)"),
    )
}

fn report(id: usize, limit: Duration, start: Instant, o: Outcome, failures: &mut Vec<usize>) {
    let took = start.elapsed();
    let pass = o.pass && took <= limit;
    if !pass {
        failures.push(id);
    }
    println!(
        "criterion {id:2}: {} ({:.1} s, limit {} s) {}",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs(),
        o.detail
    );
}

fn main() {
    let mut failures = Vec::new();
    let secs = Duration::from_secs;
    let quick: [(usize, u64, fn() -> Outcome); 5] = [
        (1, 1, c1_hankel_adjoint),
        (2, 10, c2_svt_prox),
        (3, 5, c3_reconstruction),
        (4, 60, c4_als_exactness),
        (5, 60, c5_gn_jacobian),
    ];
    for (id, limit, f) in quick {
        let t = Instant::now();
        report(id, secs(limit), t, f(), &mut failures);
    }

    let t = Instant::now();
    report(6, secs(300), t, c6_noiseless_recovery(), &mut failures);

    // 8 shares the 25 dB BTD runs of 7; both must fit their own limit.
    let t = Instant::now();
    let (c7, c8) = c7_c8_snr_trend();
    report(7, secs(1800), t, c7, &mut failures);
    report(8, secs(1800), t, c8, &mut failures);

    let t = Instant::now();
    report(9, secs(1800), t, c9_sampling_trend(), &mut failures);
    let t = Instant::now();
    report(10, secs(1800), t, c10_csi(), &mut failures);
    // Determinism has no runtime bound; a minute is generous.
    let t = Instant::now();
    report(11, secs(60), t, c11_determinism(), &mut failures);

    if failures.is_empty() {
        println!("acceptance: all 11 criteria PASS");
    } else {
        println!("acceptance: FAIL on criteria {failures:?}");
        std::process::exit(1);
    }
}
