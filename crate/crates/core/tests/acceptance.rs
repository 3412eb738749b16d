//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p orscale-core --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use orscale_core::harness::experiments::{self, Report};
use orscale_core::HarnessError;

type Check = fn() -> Result<Vec<String>, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: Check,
}

fn ok(r: Result<Report, HarnessError>) -> Result<Report, String> {
    r.map_err(|e| e.to_string())
}

/// Collects failed comparisons instead of stopping at the first.
struct Verdict {
    report: Report,
    failures: Vec<String>,
}

impl Verdict {
    fn new(report: Report) -> Self {
        Self {
            report,
            failures: Vec::new(),
        }
    }

    fn at_most(&mut self, key: &str, limit: f64) -> &mut Self {
        let v = self.report.get(key);
        if v.is_nan() || v > limit {
            self.failures.push(format!("{key}={v:.4e} > {limit:.4e}"));
        }
        self
    }

    fn at_least(&mut self, key: &str, limit: f64) -> &mut Self {
        let v = self.report.get(key);
        if v.is_nan() || v < limit {
            self.failures.push(format!("{key}={v:.4e} < {limit:.4e}"));
        }
        self
    }

    fn within(&mut self, key: &str, want: f64, tol: f64) -> &mut Self {
        let v = self.report.get(key);
        if v.is_nan() || (v - want).abs() > tol {
            self.failures
                .push(format!("{key}={v:.6} not within {tol} of {want}"));
        }
        self
    }

    fn holds(&mut self, key: &str) -> &mut Self {
        self.at_least(key, 1.0)
    }

    fn require(&mut self, what: &str, cond: bool) -> &mut Self {
        if !cond {
            self.failures.push(what.to_string());
        }
        self
    }

    fn finish(&mut self) -> Result<Vec<String>, String> {
        if self.failures.is_empty() {
            Ok(vec![self.report.to_string()])
        } else {
            Err(format!("{} | {}", self.failures.join("; "), self.report))
        }
    }
}

fn polar() -> Result<Vec<String>, String> {
    let r = ok(experiments::polar_algebra(200, 0))?;
    Verdict::new(r)
        .at_most("inner_rel_err", 1e-8)
        .at_most("dual_excess", 1e-8)
        .at_most("rank_err", 1e-8)
        .at_most("op_norm_err", 1e-8)
        .finish()
}

fn ns() -> Result<Vec<String>, String> {
    let r = ok(experiments::ns_agreement(50, 0))?;
    Verdict::new(r)
        .at_most("max_err_k25", 1e-6)
        .at_least("min_sv_k5", 0.3)
        .at_most("max_sv_k5", 1.2)
        .finish()
}

fn anchor() -> Result<Vec<String>, String> {
    let r = ok(experiments::anchor(20, &[0, 1, 2]))?;
    Verdict::new(r)
        .at_most("max_dev_eps", 10.0)
        .at_most("width_doubled_max_dev_eps", 10.0)
        .at_most("preset_runs_max_dev_eps", 10.0)
        .finish()
}

fn ceiling() -> Result<Vec<String>, String> {
    let r = ok(experiments::ceiling())?;
    Verdict::new(r)
        .at_most("max_rel_err", 0.01)
        .at_least("scale_over_required", 1.0)
        .finish()
}

fn lars() -> Result<Vec<String>, String> {
    let r = ok(experiments::early_lars())?;
    Verdict::new(r)
        .at_most("max_rel_dev", 0.02)
        .at_most("max_decay_over_step", 0.05)
        .at_least("steps", 100.0)
        .finish()
}

fn limits() -> Result<Vec<String>, String> {
    let r = ok(experiments::baseline_limits())?;
    Verdict::new(r)
        .holds("orscale_equals_muon")
        .holds("orscale_lm_equals_muon_moonlight")
        .at_least("steps", 50.0)
        .finish()
}

fn kappa() -> Result<Vec<String>, String> {
    let resolution = 601;
    let r = ok(experiments::kappa_toy(resolution))?;
    let cell = 1000f64.ln() / (resolution - 1) as f64;
    let mut v = Verdict::new(r);
    let cells = [(0.1, 1.0), (1.0, 10.0), (0.1, 10.0)];
    for (i, want) in [1.669, 3.025, 9.100].into_iter().enumerate() {
        let (a, b): (f64, f64) = cells[i];
        let closed = (1.0 + b) * (1.0 + a * a / b) / (1.0 + a).powi(2);
        v.within(&format!("kappa_layer_{i}"), closed, 1e-12);
        v.within(&format!("kappa_layer_{i}"), want, 0.005);
        v.within(&format!("grid_gain_{i}"), want, 0.02);
        let loc = v.report.get(&format!("location_cells_{i}")) * cell;
        v.require(
            &format!("cell {i}: log-location error {loc:.4} > 0.02"),
            loc <= 0.02,
        );
    }
    v.finish()
}

fn collapse() -> Result<Vec<String>, String> {
    let r = ok(experiments::collapse(100, 0))?;
    Verdict::new(r)
        .at_least("fixture_saturation", 1.0)
        .holds("trace_equals_muon")
        .at_most("phi_scale_max_rel", 1e-10)
        .at_least("mutrust_saturation", 0.99)
        .at_least("muscale_saturation", 0.99)
        .finish()
}

fn runaway() -> Result<Vec<String>, String> {
    let r = ok(experiments::runaway())?;
    Verdict::new(r)
        .at_least("fm3_max_growth", 5.0)
        .at_most("orscale_lm_max_growth", 2.0)
        .finish()
}

fn descent() -> Result<Vec<String>, String> {
    let r = ok(experiments::descent(10_000, 0))?;
    Verdict::new(r)
        .at_least("cases", 6.0)
        .at_least("min_margin_std_err", -3.0)
        .finish()
}

fn slope() -> Result<Vec<String>, String> {
    let r = ok(experiments::convergence_slope(&[0, 1, 2]))?;
    Verdict::new(r).at_most("slope", -0.35).finish()
}

fn gain() -> Result<Vec<String>, String> {
    let r = ok(experiments::layer_gain(0.01))?;
    let muon = r.get("muon_best_steps");
    let orscale = r.get("orscale_best_steps");
    Verdict::new(r)
        .require(
            &format!("orscale steps {orscale} not below muon steps {muon}"),
            orscale.is_finite() && orscale < muon,
        )
        .at_least("orscale_mean_nu_r", f64::MIN_POSITIVE)
        .at_least("orscale_mean_rho", f64::MIN_POSITIVE)
        .finish()
}

fn gradients() -> Result<Vec<String>, String> {
    let r = ok(experiments::gradient_oracle(20, 0))?;
    Verdict::new(r)
        .at_most("hetero_quadratic_max_rel_err", 1e-5)
        .at_most("least_squares_max_rel_err", 1e-5)
        .at_most("mlp2_max_rel_err", 1e-5)
        .finish()
}

fn determinism() -> Result<Vec<String>, String> {
    let r = ok(experiments::determinism())?;
    Verdict::new(r)
        .holds("rerun_identical")
        .holds("parallel_identical")
        .holds("csv_round_trip")
        .holds("config_round_trip")
        .finish()
}

const CRITERIA: [Criterion; 14] = [
    Criterion {
        id: 1,
        name: "polar algebra",
        budget: Duration::from_secs(5),
        check: polar,
    },
    Criterion {
        id: 2,
        name: "newton-schulz vs exact polar",
        budget: Duration::from_secs(5),
        check: ns,
    },
    Criterion {
        id: 3,
        name: "calibration anchor",
        budget: Duration::from_secs(10),
        check: anchor,
    },
    Criterion {
        id: 4,
        name: "ceiling",
        budget: Duration::from_secs(1),
        check: ceiling,
    },
    Criterion {
        id: 5,
        name: "early LARS tracking",
        budget: Duration::from_secs(5),
        check: lars,
    },
    Criterion {
        id: 6,
        name: "baseline limits",
        budget: Duration::from_secs(5),
        check: limits,
    },
    Criterion {
        id: 7,
        name: "two-layer kappa table",
        budget: Duration::from_secs(30),
        check: kappa,
    },
    Criterion {
        id: 8,
        name: "clip-saturation collapse",
        budget: Duration::from_secs(60),
        check: collapse,
    },
    Criterion {
        id: 9,
        name: "decoupled-decay runaway",
        budget: Duration::from_secs(120),
        check: runaway,
    },
    Criterion {
        id: 10,
        name: "expected descent",
        budget: Duration::from_secs(60),
        check: descent,
    },
    Criterion {
        id: 11,
        name: "convergence slope",
        budget: Duration::from_secs(600),
        check: slope,
    },
    Criterion {
        id: 12,
        name: "layer-adaptive gain",
        budget: Duration::from_secs(600),
        check: gain,
    },
    Criterion {
        id: 13,
        name: "gradient oracle",
        budget: Duration::from_secs(30),
        check: gradients,
    },
    Criterion {
        id: 14,
        name: "determinism and round trips",
        budget: Duration::from_secs(10),
        check: determinism,
    },
];

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
    {
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check));
        let took = start.elapsed();
        let result = match outcome {
            Ok(Ok(details)) if took <= c.budget => Ok(details),
            Ok(Ok(_)) => Err(format!("over budget: {took:.2?} > {:?}", c.budget)),
            Ok(Err(msg)) => Err(msg),
            Err(_) => Err("panicked".to_string()),
        };
        match result {
            Ok(details) => {
                println!("PASS [{:>2}] {} ({took:.2?})", c.id, c.name);
                for d in details {
                    println!("       {d}");
                }
            }
            Err(msg) => {
                failed += 1;
                println!("FAIL [{:>2}] {} ({took:.2?}): {msg}", c.id, c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
