use serde::Serialize;
use serde_json::{json, Value};

use fpp_core::certifier::{
    alpha_star, best_lower_bound_mu, best_mu_star_lower, default_delta_grid,
    diagonal_growth_infimum, evaluate_upper, find_threshold, lower_bound_mu, mu_star_lower,
    optimize_upper, overlap_correction, shape_certificate, Gate, Pipeline, ShapeOptions,
    ThresholdOptions, UpperGrid, UpperTuple, Verdict,
};
use fpp_core::combinatorics::{rw_overlap_stats, xi_bounds, OverlapMode};
use fpp_core::engine::{mu_e1_caps, CoordinateBox, SearchCaps};
use fpp_core::estimators::{
    default_n_mu_e1, estimate_mu_e1, estimate_mu_e1_point, estimate_mu_star, estimate_slab_mean,
    greedy_diagonal_bound, Estimate, EstimatorOptions, DEFAULT_N_MU_STAR,
};
use fpp_core::{DistributionSpec, FppError};

use crate::output::{csv_body, manifest_hash, stdout_text, unix_now, write_run, Artifact, Payload};
use crate::{
    Cli, Command, LowerArgs, LowerTarget, OverlapArgs, OverlapModeArg, PipelineArg, SawArgs,
    ShapeArgs, SimArgs, ThresholdArgs, UpperArgs, VerdictArg, EXIT_GATE, EXIT_OK, EXIT_USAGE,
};

/// Tuple `η` when `--delta` and `--b` are given without `--eta`.
const DEFAULT_TUPLE_ETA: f64 = 1e-3;

pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<FppError> for Failure {
    fn from(e: FppError) -> Self {
        let code = match e {
            FppError::InvalidArgument(_) | FppError::InvalidDistribution(_) => EXIT_USAGE,
            _ => EXIT_GATE,
        };
        Failure {
            code,
            message: format!("error: {e}"),
        }
    }
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: format!("error: {message}"),
        }
    }
}

struct Outcome {
    artifacts: Vec<Artifact>,
    seed: Option<u64>,
    /// First failing binding gate; turns the exit code into 2.
    failed_gate: Option<String>,
}

impl Outcome {
    fn json(name: &str, value: Value) -> Self {
        Outcome {
            artifacts: vec![Artifact {
                name: name.into(),
                payload: Payload::Json(value),
            }],
            seed: None,
            failed_gate: None,
        }
    }

    fn failing(mut self, gate: Option<String>) -> Self {
        self.failed_gate = gate;
        self
    }
}

fn describe(g: &Gate) -> String {
    let rel = serde_json::to_value(g.relation)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    format!("{} ({} {} {})", g.name, g.lhs, rel, g.rhs)
}

fn first_failed<'a>(gates: impl IntoIterator<Item = &'a Gate>) -> Option<String> {
    gates
        .into_iter()
        .find(|g| g.binding && !g.satisfied)
        .map(describe)
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn spec_of(dist: &str) -> Result<DistributionSpec, Failure> {
    Ok(DistributionSpec::parse(dist)?)
}

fn pipeline_of(arg: Option<PipelineArg>, spec: &DistributionSpec) -> Pipeline {
    match arg {
        Some(PipelineArg::Generic) => Pipeline::Generic,
        Some(PipelineArg::ExactGamma) => Pipeline::ExactGamma,
        None => Pipeline::default_for(spec),
    }
}

fn grid_of(eta: Option<f64>) -> UpperGrid {
    match eta {
        Some(e) => UpperGrid::default().with_etas(vec![e]),
        None => UpperGrid::default(),
    }
}

fn tuple_of(u: &UpperArgs) -> Option<UpperTuple> {
    match (u.delta, u.b) {
        (Some(delta), Some(b)) => Some(UpperTuple {
            delta,
            eta: u.eta.unwrap_or(DEFAULT_TUPLE_ETA),
            b,
        }),
        _ => None,
    }
}

pub fn execute(cli: &Cli) -> Result<i32, Failure> {
    let started = unix_now();
    let command = cli.command.name();
    let (config, outcome) = match &cli.command {
        Command::SimulateMu(a) => (to_json(a), simulate(command, a, cli.workers)?),
        Command::SimulateMustar(a) => (to_json(a), simulate(command, a, cli.workers)?),
        Command::Slab(a) => (to_json(a), simulate(command, a, cli.workers)?),
        Command::GreedyDiag(a) => (to_json(a), simulate(command, a, cli.workers)?),
        Command::CertifyUpper(a) => (to_json(a), certify_upper(a)?),
        Command::CertifyLower(a) => (to_json(a), certify_lower(a)?),
        Command::CertifyShape(a) => (to_json(a), certify_shape(a)?),
        Command::FindThreshold(a) => (to_json(a), threshold(a)?),
        Command::Saw(a) => (to_json(a), saw(a)?),
        Command::RwOverlap(a) => (to_json(a), rw_overlap(a)?),
        Command::AlphaStar => (json!({}), alpha()),
    };
    let names: Vec<String> = outcome.artifacts.iter().map(|a| a.name.clone()).collect();
    let hash = manifest_hash(command, &config, outcome.seed, &names);
    if let Some(dir) = &cli.out_dir {
        write_run(
            dir,
            command,
            config,
            outcome.seed,
            cli.workers,
            started,
            &outcome.artifacts,
        )?;
    }
    if let Some(primary) = outcome.artifacts.first() {
        print!("{}", stdout_text(&hash, primary));
    }
    match outcome.failed_gate {
        Some(g) => {
            eprintln!("gate failed: {g}");
            Ok(EXIT_GATE)
        }
        None => Ok(EXIT_OK),
    }
}

#[derive(Serialize)]
struct EstimateRow {
    quantity: &'static str,
    d: u32,
    n: u32,
    replicas: u64,
    mean: f64,
    stderr: f64,
    exact_fraction: f64,
    seed: u64,
}

#[derive(Serialize)]
struct ReplicaRow {
    replica: u64,
    seed: u64,
    value: f64,
    exact: bool,
    settled_count: u64,
    max_settled: Option<u64>,
    max_time: Option<f64>,
    coordinate_box: String,
}

fn box_text(b: &Option<CoordinateBox>) -> String {
    match b {
        None => String::new(),
        Some(b) => {
            let mut s = format!("{}:{}", b.default.0, b.default.1);
            for (i, (lo, hi)) in &b.overrides {
                s.push_str(&format!(";x{i}={lo}:{hi}"));
            }
            s
        }
    }
}

fn caps_of(a: &SimArgs, base: SearchCaps) -> Option<SearchCaps> {
    if a.max_settled.is_none() && a.max_time.is_none() && a.box_radius.is_none() {
        return None;
    }
    let mut caps = base;
    if let Some(m) = a.max_settled {
        caps.max_settled = m;
    }
    if a.max_time.is_some() {
        caps.max_time = a.max_time;
    }
    if let Some(r) = a.box_radius {
        caps.coordinate_box = Some(CoordinateBox::uniform(r));
    }
    Some(caps)
}

fn simulate(command: &str, a: &SimArgs, workers: usize) -> Result<Outcome, Failure> {
    let spec = spec_of(&a.dist)?;
    let mut opts = EstimatorOptions {
        workers,
        first_replica: a.first_replica,
        caps: None,
    };
    let est: Estimate = match command {
        "simulate-mu" => {
            let n = a.n.unwrap_or_else(|| default_n_mu_e1(a.d));
            opts.caps = caps_of(a, mu_e1_caps(n));
            if a.point {
                estimate_mu_e1_point(a.d, &spec, n, a.replicas, a.seed, &opts)?
            } else {
                estimate_mu_e1(a.d, &spec, n, a.replicas, a.seed, &opts)?
            }
        }
        "simulate-mustar" => {
            opts.caps = caps_of(a, SearchCaps::default());
            estimate_mu_star(
                a.d,
                &spec,
                a.n.unwrap_or(DEFAULT_N_MU_STAR),
                a.replicas,
                a.seed,
                &opts,
            )?
        }
        "slab" => {
            opts.caps = caps_of(a, SearchCaps::default());
            estimate_slab_mean(a.d, &spec, a.replicas, a.seed, &opts)?
        }
        _ => greedy_diagonal_bound(
            a.d,
            &spec,
            a.n.unwrap_or(DEFAULT_N_MU_STAR),
            a.replicas,
            a.seed,
            &opts,
        )?,
    };
    let r = &est.record;
    if !r.certificate_grade() {
        eprintln!(
            "warning: {} of {} replicas hit a search cap",
            r.replicas - (r.exact_fraction * r.replicas as f64).round() as u64,
            r.replicas
        );
    }
    let summary = [EstimateRow {
        quantity: r.quantity.as_str(),
        d: r.d,
        n: r.n,
        replicas: r.replicas,
        mean: r.mean,
        stderr: r.stderr,
        exact_fraction: r.exact_fraction,
        seed: r.master_seed,
    }];
    let replicas: Vec<ReplicaRow> = est
        .samples
        .iter()
        .map(|s| ReplicaRow {
            replica: s.replica,
            seed: s.seed,
            value: s.value,
            exact: s.exact,
            settled_count: s.settled_count,
            max_settled: est.caps.as_ref().map(|c| c.max_settled),
            max_time: est.caps.as_ref().and_then(|c| c.max_time),
            coordinate_box: box_text(&est.caps.as_ref().and_then(|c| c.coordinate_box.clone())),
        })
        .collect();
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "estimates.csv".into(),
                payload: Payload::Csv(csv_body(&summary)?),
            },
            Artifact {
                name: "replicas.csv".into(),
                payload: Payload::Csv(csv_body(&replicas)?),
            },
        ],
        seed: Some(a.seed),
        failed_gate: None,
    })
}

fn certify_upper(a: &UpperArgs) -> Result<Outcome, Failure> {
    let spec = spec_of(&a.dist)?;
    let pipeline = pipeline_of(a.pipeline, &spec);
    let (source, candidate, evaluated, grid) = match tuple_of(a) {
        Some(t) => (
            "tuple",
            evaluate_upper(a.d, t.delta, t.eta, t.b, &spec, pipeline)?,
            1,
            None,
        ),
        None => {
            let grid = grid_of(a.eta);
            let opt = optimize_upper(a.d, &spec, &grid, pipeline)?;
            ("grid", opt.best, opt.evaluated, Some(grid.summary()))
        }
    };
    let failed = first_failed(&candidate.params.validity);
    let value = json!({
        "d": a.d,
        "spec": spec.id,
        "pipeline": pipeline,
        "source": source,
        "grid": grid,
        "evaluated": evaluated,
        "mu_upper": candidate.is_valid().then(|| candidate.value()),
        "candidate": candidate,
    });
    Ok(Outcome::json("upper.json", value).failing(failed))
}

fn certify_lower(a: &LowerArgs) -> Result<Outcome, Failure> {
    let spec = spec_of(&a.dist)?;
    let pipeline = pipeline_of(a.pipeline, &spec);
    let deltas = default_delta_grid();
    let want_mu = a.target != LowerTarget::Mustar;
    let want_star = a.target != LowerTarget::Mu;
    let mu = if want_mu {
        Some(match a.delta {
            Some(delta) => lower_bound_mu(a.d, &spec, delta, pipeline)?,
            None => best_lower_bound_mu(a.d, &spec, pipeline, &deltas)?,
        })
    } else {
        None
    };
    let star = if want_star {
        Some(match a.delta {
            Some(delta) => mu_star_lower(a.d, &spec, delta, pipeline)?,
            None => best_mu_star_lower(a.d, &spec, pipeline, &deltas)?,
        })
    } else {
        None
    };
    let mut failed = None;
    if let Some(m) = mu.as_ref().filter(|m| m.bound.is_none()) {
        failed = first_failed(&m.validity).map(|g| format!("mu_lower.{g}"));
    }
    if failed.is_none() {
        if let Some(s) = star.as_ref().filter(|s| s.bound.is_none()) {
            failed = first_failed(&s.validity).map(|g| format!("mustar_lower.{g}"));
        }
    }
    let value = json!({
        "d": a.d,
        "spec": spec.id,
        "pipeline": pipeline,
        "mu_lower": mu.as_ref().and_then(|m| m.bound),
        "mustar_lower": star.as_ref().and_then(|s| s.bound),
        "mu_witness": mu,
        "mustar_witness": star,
    });
    Ok(Outcome::json("lower.json", value).failing(failed))
}

fn shape_options(
    upper: Option<&UpperArgs>,
    eta: Option<f64>,
    pipeline: Pipeline,
    lower_delta: Option<f64>,
    mustar_delta: Option<f64>,
) -> ShapeOptions {
    ShapeOptions {
        grid: grid_of(eta),
        pipeline: Some(pipeline),
        lower_delta,
        mustar_delta,
        upper_tuple: upper.and_then(tuple_of),
        ..ShapeOptions::default()
    }
}

fn certify_shape(a: &ShapeArgs) -> Result<Outcome, Failure> {
    let spec = spec_of(&a.upper.dist)?;
    let pipeline = pipeline_of(a.upper.pipeline, &spec);
    let opts = shape_options(
        Some(&a.upper),
        a.upper.eta,
        pipeline,
        a.lower_delta,
        a.mustar_delta,
    );
    let cert = shape_certificate(a.upper.d, &spec, &opts)?;
    let any = cert.ball_excluded || cert.cube_strict || cert.diamond_strict;
    let failed = if any {
        None
    } else {
        first_failed(&cert.preconditions)
    };
    Ok(Outcome::json("certificate.json", to_json(&cert)).failing(failed))
}

fn threshold(a: &ThresholdArgs) -> Result<Outcome, Failure> {
    let spec = spec_of(&a.dist)?;
    let pipeline = pipeline_of(a.pipeline, &spec);
    let verdict = match a.verdict {
        VerdictArg::Ball => Verdict::BallExcluded,
        VerdictArg::Cube => Verdict::CubeStrict,
        VerdictArg::Diamond => Verdict::DiamondStrict,
    };
    let opts = ThresholdOptions {
        shape: shape_options(None, a.eta, pipeline, a.lower_delta, a.mustar_delta),
        spot_checks: a.spot_checks,
        max_d: a.max_d,
    };
    let result = find_threshold(&spec, verdict, &opts)?;
    Ok(Outcome::json("threshold.json", to_json(&result)))
}

fn saw(a: &SawArgs) -> Result<Outcome, Failure> {
    let x = xi_bounds(a.d, a.n)?;
    let failed = (!x.holds).then(|| {
        format!(
            "root_count >= lower_const ({} >= {})",
            x.root_count, x.lower_const
        )
    });
    let value = json!({ "n": a.n, "d": a.d, "count": x.count, "xi": x });
    Ok(Outcome::json("saw.json", value).failing(failed))
}

#[derive(Serialize)]
struct OverlapRow {
    p: u32,
    n: u32,
    l: u32,
    #[serde(rename = "K")]
    k: u32,
    prob: f64,
    bound: f64,
    ratio: f64,
}

/// `(1/2p)^l` times the overlap correction where it is defined (`1 <= l <= n-1`).
fn overlap_bound(p: u32, n: u32, l: u32) -> f64 {
    let lead = (0.5 / p as f64).powi(l as i32);
    if l >= 1 && l < n {
        lead * overlap_correction(n, p as u64, l)
    } else {
        lead
    }
}

fn rw_overlap(a: &OverlapArgs) -> Result<Outcome, Failure> {
    let mode = match a.mode {
        OverlapModeArg::Exact => OverlapMode::ExactEnumeration,
        OverlapModeArg::MonteCarlo => OverlapMode::MonteCarlo {
            samples: a.samples,
            seed: a.seed,
        },
    };
    let stats = rw_overlap_stats(a.p, a.n, mode)?;
    let rows: Vec<OverlapRow> = stats
        .table
        .iter()
        .map(|c| OverlapRow {
            p: a.p,
            n: a.n,
            l: c.l,
            k: c.k,
            prob: c.prob,
            bound: overlap_bound(a.p, a.n, c.l),
            ratio: c.prob / (0.5 / a.p as f64).powi(c.l as i32),
        })
        .collect();
    let failed = if a.mode == OverlapModeArg::Exact {
        (1..a.n)
            .find(|&l| stats.prob_overlap(l) > overlap_bound(a.p, a.n, l))
            .map(|l| {
                format!(
                    "P(SA pair, overlap {l}) <= (1/2p)^l factor ({} > {})",
                    stats.prob_overlap(l),
                    overlap_bound(a.p, a.n, l)
                )
            })
    } else {
        None
    };
    let summary = json!({
        "p": stats.p,
        "n": stats.n,
        "mode": stats.mode,
        "sa_pair_prob": stats.sa_pair_prob,
        "non_sa_mass": stats.non_sa_mass,
        "trials": stats.trials,
    });
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "overlap.csv".into(),
                payload: Payload::Csv(csv_body(&rows)?),
            },
            Artifact {
                name: "overlap_summary.json".into(),
                payload: Payload::Json(summary),
            },
        ],
        seed: matches!(a.mode, OverlapModeArg::MonteCarlo).then_some(a.seed),
        failed_gate: failed,
    })
}

fn alpha() -> Outcome {
    let star = alpha_star();
    let (argmin, inf) = diagonal_growth_infimum();
    let identity = std::f64::consts::E * (star.alpha * star.alpha - 1.0).sqrt();
    Outcome::json(
        "alpha_star.json",
        json!({
            "alpha": star.alpha,
            "companion": star.companion,
            "residual": star.residual,
            "iterations": star.iterations,
            "growth_argmin": argmin,
            "growth_infimum": inf,
            "e_sqrt_alpha2_minus_1": identity,
            "identity_residual": (inf - identity).abs(),
        }),
    )
}
