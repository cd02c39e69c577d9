//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::cmp::Ordering;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use common::{
    cn_matrix, finite_difference, random_covariance, rng, sample_quantized_moments, wirtinger_vs_fd, worst_z,
};
use onebit_precoding::gp::{gradient_projection, GpConfig, Initialization};
use onebit_precoding::precoder::{mse_gradient, mse_objective, DigitalPrecoder, SystemDimensions};
use onebit_precoding::quant::{arcsine_cov_quantized, cross_cov_quantized_unquantized};
use onebit_precoding::sim::{
    ber_experiment, d_distribution_experiment, db_to_linear, draw_realization, sensitivity_experiment, BerCurve,
    BerExperiment, PerturbationModel, PerturbationSpec, Scheme,
};

/// Standard errors a statistical comparison may deviate by.
const STAT_SIGMAS: f64 = 3.0;
const QUANT_SAMPLES: usize = 1_000_000;
const QUANT_MATRICES: u64 = 20;
const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-5;
const FEASIBILITY_TOL: f64 = 1e-9;
const INIT_AGREEMENT: f64 = 0.01;
const SENSITIVITY_FACTOR: f64 = 2.0;
const D_SPREAD_DB: f64 = 6.0;
const D_SPREAD_QUANTILE: f64 = 0.95;

const N: usize = 20;
const M: usize = 4;
const CHANNELS: usize = 200;
const SYMBOLS: usize = 1000;
const SEED: u64 = 2016;

fn reference_dims(etx_db: f64) -> SystemDimensions {
    SystemDimensions::new(N, M, 2.0, db_to_linear(etx_db)).unwrap()
}

type Outcome = Result<String, String>;

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn quantization_statistics() -> Outcome {
    let mut worst_cov = 0.0f64;
    let mut worst_cross = 0.0f64;
    for k in 0..QUANT_MATRICES {
        let mut r = rng(10_000 + k);
        let c = random_covariance(&mut r, 4);
        let predicted = arcsine_cov_quantized(&c).map_err(|e| e.to_string())?;
        if (0..4).any(|i| predicted[(i, i)].re != 2.0 || predicted[(i, i)].im != 0.0) {
            return Err(format!("matrix {k}: diagonal of quantized covariance is not exactly 2"));
        }
        let cross = cross_cov_quantized_unquantized(&c).map_err(|e| e.to_string())?;
        let m = sample_quantized_moments(&c, QUANT_SAMPLES, &mut r);
        worst_cov = worst_cov.max(worst_z(&m.cov, &predicted));
        worst_cross = worst_cross.max(worst_z(&m.cross, &cross));
    }
    check(
        worst_cov <= STAT_SIGMAS && worst_cross <= STAT_SIGMAS,
        format!("worst deviation {worst_cov:.2} SE (arcsine), {worst_cross:.2} SE (cross)"),
        format!("worst deviation {worst_cov:.2} SE (arcsine), {worst_cross:.2} SE (cross) exceeds {STAT_SIGMAS}"),
    )
}

fn gradient_correctness() -> Outcome {
    let dims = SystemDimensions::new(4, 2, 2.0, 10.0).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(20_000 + seed);
        let h = cn_matrix(&mut r, 2, 4);
        let p = cn_matrix(&mut r, 4, 2);
        let w = mse_gradient(&h, &DigitalPrecoder::new(p.clone()), &dims).map_err(|e| e.to_string())?;
        let fd = finite_difference(&p, FD_STEP, |q| {
            mse_objective(&h, &DigitalPrecoder::new(q.clone()), &dims).unwrap().mse
        });
        worst = worst.max(wirtinger_vs_fd(&w, &fd));
    }
    check(
        worst <= FD_REL_TOL,
        format!("worst relative error {worst:.2e}"),
        format!("worst relative error {worst:.2e} > {FD_REL_TOL:e}"),
    )
}

fn optimizer_contract() -> Outcome {
    let dims = reference_dims(10.0);
    let mut worst_gap = 0.0f64;
    let mut max_iters = 0;
    for seed in 0..20 {
        let h = draw_realization(&dims, 30_000, seed);
        let cfg = GpConfig {
            record_trajectory: true,
            ..GpConfig::default()
        };
        let a = gradient_projection(h.matrix(), &dims, &cfg).map_err(|e| e.to_string())?;
        let b = gradient_projection(
            h.matrix(),
            &dims,
            &GpConfig {
                initialization: Initialization::Random { seed: 31_000 + seed },
                ..cfg
            },
        )
        .map_err(|e| e.to_string())?;
        for (name, run) in [("channel", &a), ("random", &b)] {
            let t = run.trajectory.as_ref().expect("recorded");
            if let Some(s) = t.iter().find(|s| s.trace_power > dims.etx / 2.0 + FEASIBILITY_TOL) {
                return Err(format!(
                    "seed {seed} ({name} init): infeasible iterate, tr(PP^H) = {}",
                    s.trace_power
                ));
            }
            if run.final_mse.partial_cmp(&run.initial_mse) != Some(Ordering::Less) {
                return Err(format!(
                    "seed {seed} ({name} init): final MSE {} not below initial {}",
                    run.final_mse, run.initial_mse
                ));
            }
            if !run.converged {
                return Err(format!("seed {seed} ({name} init): hit the iteration cap"));
            }
            max_iters = max_iters.max(run.iterations);
        }
        let gap = (a.final_mse - b.final_mse).abs() / a.final_mse.min(b.final_mse);
        worst_gap = worst_gap.max(gap);
    }
    check(
        worst_gap <= INIT_AGREEMENT,
        format!(
            "all feasible and improving, worst init disagreement {:.2e}, max {max_iters} iterations",
            worst_gap
        ),
        format!("init disagreement {worst_gap:.2e} > {INIT_AGREEMENT}"),
    )
}

fn separation(a: &BerCurve, b: &BerCurve, etx_db: f64) -> (f64, f64) {
    let pa = a.point(etx_db).unwrap();
    let pb = b.point(etx_db).unwrap();
    let se = (pa.stderr().powi(2) + pb.stderr().powi(2)).sqrt();
    (pa.ber() - pb.ber(), se)
}

fn ber_ordering() -> Outcome {
    let grid = [6.0, 10.0, 14.0];
    let exp = BerExperiment {
        schemes: vec![
            Scheme::WfEqualPower,
            Scheme::QpGpEqualPower,
            Scheme::QpGp,
            Scheme::WfNoQuant,
        ],
        etx_db: grid.to_vec(),
        n_channels: CHANNELS,
        n_symbols: SYMBOLS,
        dims: reference_dims(10.0),
        seed: SEED,
        gp: GpConfig::default(),
    };
    let curves = ber_experiment(&exp).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for &db in &grid {
        let line: Vec<String> = curves
            .iter()
            .map(|c| format!("{}={:.2e}", c.scheme, c.point(db).unwrap().ber()))
            .collect();
        summary.push(format!("{db} dB: {}", line.join(" ")));
        for pair in curves.windows(2) {
            let (diff, se) = separation(&pair[0], &pair[1], db);
            if diff.partial_cmp(&(STAT_SIGMAS * se)) != Some(Ordering::Greater) {
                return Err(format!(
                    "{db} dB: {} - {} = {diff:.2e} not above {STAT_SIGMAS} x {se:.2e}; {}",
                    pair[0].scheme,
                    pair[1].scheme,
                    summary.join("; ")
                ));
            }
        }
    }
    Ok(summary.join("; "))
}

fn sensitivity() -> Outcome {
    let spec = PerturbationSpec {
        level: 0.10,
        model: PerturbationModel::Uniform,
        seed: SEED + 1,
    };
    let (ideal, perturbed) = sensitivity_experiment(
        &spec,
        &[10.0],
        CHANNELS,
        SYMBOLS,
        &reference_dims(10.0),
        SEED,
        &GpConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let bi = ideal.points[0].ber();
    let bp = perturbed.points[0].ber();
    check(
        bp <= SENSITIVITY_FACTOR * bi && bp >= bi / SENSITIVITY_FACTOR,
        format!("ideal {bi:.3e}, 10% error {bp:.3e} (ratio {:.2})", bp / bi),
        format!("ideal {bi:.3e}, 10% error {bp:.3e} outside factor {SENSITIVITY_FACTOR}"),
    )
}

fn d_spread() -> Outcome {
    let dist = d_distribution_experiment(CHANNELS, 10.0, &reference_dims(10.0), SEED, &GpConfig::default(), 0.5)
        .map_err(|e| e.to_string())?;
    let frac = dist.fraction_within(D_SPREAD_DB);
    let mass: u64 = dist.bins.iter().map(|b| b.count).sum();
    if mass != (N * CHANNELS) as u64 {
        return Err(format!("histogram mass {mass} != {}", N * CHANNELS));
    }
    check(
        frac >= D_SPREAD_QUANTILE,
        format!(
            "{:.2}% within {D_SPREAD_DB} dB, max deviation {:.2} dB",
            100.0 * frac,
            dist.max_deviation_db
        ),
        format!("only {:.2}% within {D_SPREAD_DB} dB", 100.0 * frac),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn determinism() -> Outcome {
    let dims = reference_dims(10.0);
    let run = || -> Result<String, String> {
        let exp = BerExperiment {
            schemes: Scheme::IMPLEMENTED.to_vec(),
            etx_db: vec![0.0, 10.0],
            n_channels: 24,
            n_symbols: 200,
            dims,
            seed: SEED,
            gp: GpConfig::default(),
        };
        let ber = ber_experiment(&exp).map_err(|e| e.to_string())?;
        let spec = PerturbationSpec {
            level: 0.1,
            model: PerturbationModel::Uniform,
            seed: 3,
        };
        let sens = sensitivity_experiment(&spec, &[10.0], 24, 200, &dims, SEED, &GpConfig::default())
            .map_err(|e| e.to_string())?;
        let dist =
            d_distribution_experiment(24, 10.0, &dims, SEED, &GpConfig::default(), 0.5).map_err(|e| e.to_string())?;
        Ok(format!(
            "{}\n{}\n{}",
            serde_json::to_string(&ber).unwrap(),
            serde_json::to_string(&sens).unwrap(),
            serde_json::to_string(&dist).unwrap()
        ))
    };
    let outputs: Vec<String> = [1usize, 2, 8]
        .into_iter()
        .map(|t| in_pool(t, run))
        .collect::<Result<_, _>>()?;
    check(
        outputs.windows(2).all(|w| w[0].as_bytes() == w[1].as_bytes()),
        format!("byte-identical across 1, 2 and 8 threads ({} bytes)", outputs[0].len()),
        "results differ between thread counts".into(),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("quantization statistics vs sampling oracle", quantization_statistics),
        ("gradient vs finite differences", gradient_correctness),
        ("gradient projection contract", optimizer_contract),
        ("BER ordering at 6/10/14 dB", ber_ordering),
        ("sensitivity to 10% analog error", sensitivity),
        ("analog coefficient spread", d_spread),
        ("determinism across thread counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
