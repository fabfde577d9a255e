use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use l0cert::bnb::{certify as run_certify, BnbConfig};
use l0cert::io::{write_synthetic, DataSet, Overrides, META_FILE, X_FILE, Y_FILE};
use l0cert::perspective::{eval_g, prox_g, prox_g_conjugate, PerspectiveContext};
use l0cert::problem::{generate_synthetic, SyntheticSpec};
use l0cert::solver::{solve_relaxation, write_trace_csv, Method, Restart, SolverConfig, Termination};
use l0cert::{LossKind, ProblemInstance};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{BenchArgs, CertifyArgs, Failure, GenArgs, MethodArg, RelaxArgs, RestartArg, SolveArgs, Task};

/// Provenance block embedded in every JSON output. Timing fields aside, the
/// command line it describes reproduces the output exactly.
#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    input_hashes: Hashes,
    threads: usize,
    version: &'static str,
}

impl RunManifest {
    fn new(command: &'static str, config: Value, seed: Option<u64>, input_hashes: Hashes) -> Self {
        RunManifest {
            command,
            config,
            seed,
            input_hashes,
            threads: 1,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Serialize)]
struct Output<T: Serialize> {
    manifest: RunManifest,
    #[serde(flatten)]
    result: T,
}

fn emit<T: Serialize>(manifest: RunManifest, result: T) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &Output { manifest, result })
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(out))
        .map_err(|e| Failure::io(format!("writing output: {e}")))
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::io(format!("reading {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn loss_of(task: Task) -> LossKind {
    match task {
        Task::Squared => LossKind::Squared,
        Task::Logistic => LossKind::Logistic,
    }
}

pub fn gen(args: GenArgs) -> Result<(), Failure> {
    let spec = SyntheticSpec {
        n: args.n,
        p: args.p,
        k_true: args.k_true,
        sigma: args.sigma,
        snr: args.snr,
        coef_magnitude: args.coef,
        seed: args.seed,
        task: loss_of(args.task),
    };
    spec.validate()?;
    let data = generate_synthetic(&spec)?;
    let paths = write_synthetic(&args.out, &data, &spec)?;
    let mut files = BTreeMap::new();
    for path in &paths {
        let name = path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned());
        files.insert(name, sha256_file(path)?);
    }
    let config = json!({ "generator": spec, "out": args.out });
    emit(
        RunManifest::new("gen", config, Some(spec.seed), BTreeMap::new()),
        json!({ "files": files }),
    )
}

type Hashes = BTreeMap<String, String>;

/// Instance, its generator seed and input hashes.
fn load(args: &SolveArgs) -> Result<(ProblemInstance, Option<u64>, Hashes), Failure> {
    let data = DataSet::read(&args.data)?;
    let inst = data.instance(Overrides {
        lambda2: args.lambda2,
        m: args.m,
        k: args.k,
    })?;
    let mut hashes = BTreeMap::new();
    for name in [X_FILE, Y_FILE, META_FILE] {
        hashes.insert(name.to_string(), sha256_file(&args.data.join(name))?);
    }
    Ok((inst, data.meta.generator.map(|g| g.seed), hashes))
}

fn solver_config(args: &SolveArgs, record_trace: bool) -> Result<SolverConfig, Failure> {
    if let Some(t) = args.time_limit {
        if !(t >= 0.0) {
            return Err(Failure::usage(format!("--time-limit must be nonnegative, got {t}")));
        }
    }
    let config = SolverConfig {
        method: match args.method {
            MethodArg::Pgd => Method::Pgd,
            MethodArg::Fista => Method::Fista,
            MethodArg::FistaLinesearch => Method::FistaLinesearch,
        },
        restart: match args.restart {
            RestartArg::Gap => Restart::GapBased { eta: args.eta },
            RestartArg::Function => Restart::FunctionHeuristic,
            RestartArg::None => Restart::None,
        },
        tol_gap: args.tol,
        max_iters: args.max_iters,
        max_seconds: args.time_limit.unwrap_or(f64::INFINITY),
        record_trace,
        ..Default::default()
    };
    config.validate()?;
    Ok(config)
}

fn problem_config(args: &SolveArgs, inst: &ProblemInstance) -> Value {
    json!({
        "data": args.data,
        "loss": inst.loss,
        "lambda2": inst.lambda2,
        "M": inst.m,
        "k": inst.k,
        "time_limit": args.time_limit,
    })
}

#[derive(Serialize)]
struct RelaxReport {
    phi: f64,
    psi: f64,
    gap: f64,
    lower_bound: f64,
    iters: usize,
    restarts: usize,
    seconds: f64,
    termination: Termination,
    lipschitz: f64,
}

pub fn relax(args: RelaxArgs) -> Result<(), Failure> {
    let (inst, seed, hashes) = load(&args.solve)?;
    let config = solver_config(&args.solve, args.trace.is_some())?;
    let ctx = PerspectiveContext::root(inst.p(), inst.k, inst.m)?;
    let res = solve_relaxation(&inst, &ctx, &config, None, None)?;

    if let (Some(path), Some(trace)) = (&args.trace, &res.trace) {
        let file = File::create(path).map_err(|e| Failure::io(format!("creating {}: {e}", path.display())))?;
        let mut out = BufWriter::new(file);
        write_trace_csv(&mut out, trace)
            .and_then(|_| out.flush())
            .map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))?;
    }

    let mut manifest_config = problem_config(&args.solve, &inst);
    manifest_config["solver"] = json!(config);
    manifest_config["trace"] = json!(args.trace);
    let report = RelaxReport {
        phi: res.state.phi,
        psi: res.state.psi,
        gap: res.state.gap,
        lower_bound: res.lower_bound,
        iters: res.state.iter,
        restarts: res.state.restarts,
        seconds: res.seconds,
        termination: res.termination,
        lipschitz: res.lipschitz,
    };
    emit(RunManifest::new("relax", manifest_config, seed, hashes), report)
}

pub fn certify(args: CertifyArgs) -> Result<(), Failure> {
    let (inst, seed, hashes) = load(&args.solve)?;
    // the time limit bounds the whole search, not each node solve
    let solver = SolverConfig {
        max_seconds: f64::INFINITY,
        ..solver_config(&args.solve, false)?
    };
    let config = BnbConfig {
        tol_rel: args.gap_tol,
        time_limit: args.solve.time_limit.unwrap_or(f64::INFINITY),
        node_limit: args.node_limit,
        beam_width: args.beam_width,
        solver,
        ..Default::default()
    };
    config.validate()?;
    let cert = run_certify(&inst, &config)?;
    let mut manifest_config = problem_config(&args.solve, &inst);
    manifest_config["bnb"] = json!(config);
    emit(
        RunManifest::new("certify", manifest_config, seed, hashes),
        cert.report(&config),
    )
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn bench_kernels(args: BenchArgs) -> Result<(), Failure> {
    if args.repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    if args.p_list.is_empty() || args.p_list.contains(&0) {
        return Err(Failure::usage("--p-list must hold positive dimensions"));
    }
    if !(args.rho > 0.0 && args.rho.is_finite()) {
        return Err(Failure::usage(format!("--rho must be positive, got {}", args.rho)));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let mut rows = Vec::new();
    for &p in &args.p_list {
        let ctx = PerspectiveContext::root(p, args.k, args.m)?;
        let gamma: Array1<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let beta = prox_g(&ctx, args.rho, &gamma);
        let time = |f: &dyn Fn()| -> Vec<f64> {
            (0..args.repeats)
                .map(|_| {
                    let t = Instant::now();
                    f();
                    t.elapsed().as_secs_f64()
                })
                .collect()
        };
        let kernels: [(&str, Vec<f64>); 3] = [
            ("eval_g", time(&|| {
                std::hint::black_box(eval_g(&ctx, &beta));
            })),
            ("prox_g_conjugate", time(&|| {
                std::hint::black_box(prox_g_conjugate(&ctx, args.rho, &beta));
            })),
            ("prox_g", time(&|| {
                std::hint::black_box(prox_g(&ctx, args.rho, &beta));
            })),
        ];
        for (name, samples) in kernels {
            let (mean, std) = mean_std(&samples);
            rows.push(format!("{name},{p},{mean:.6e},{std:.6e}"));
        }
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "kernel,p,mean,std")
        .and_then(|_| rows.iter().try_for_each(|r| writeln!(out, "{r}")))
        .map_err(|e| Failure::io(format!("writing output: {e}")))
}
