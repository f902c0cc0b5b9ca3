use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use gwil_core::env::{build_chain_env, build_maze, reflect_maze, MazeSpec};
use gwil_core::mdp::{apply_isometry, rollout, value_iteration, Policy, TabularMetricMdp};
use gwil_core::trainer::{train_gwil, train_wasserstein_baseline, TrainConfig, TrainLog};
use gwil_core::{solve_gw, solve_gw_entropic, Dedup, Metric, MetricMeasureSpace, SolveOptions, Trajectory};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::manifest::ManifestBuilder;
use crate::{Baseline, ExportArgs, GwArgs, ImitateArgs, MakeEnvArgs, OracleArgs};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: &str, manifest: &mut ManifestBuilder) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path);
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize, manifest: &mut ManifestBuilder) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"), manifest)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Accepts either `{"dist", "mass"}` or a trajectory `{"steps"}` (Euclidean on step features).
fn load_space(path: &Path) -> Result<MetricMeasureSpace> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("steps").is_some() {
        let traj: Trajectory = serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?;
        Ok(MetricMeasureSpace::from_trajectory(&traj, Metric::Euclidean, Dedup::None)?)
    } else {
        serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn gw(args: &GwArgs) -> Result<()> {
    let x = load_space(&args.x)?;
    let y = load_space(&args.y)?;
    let mut opts = SolveOptions::default().with_seed(args.seed).with_restarts(args.restarts);
    if args.exhaustive {
        opts = opts.exhaustive();
    }
    let result = match args.epsilon {
        Some(eps) => solve_gw_entropic(&x, &y, eps, &opts)?,
        None => solve_gw(&x, &y, &opts)?,
    };

    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("gw", args)?;
    manifest.input(&args.x);
    manifest.input(&args.y);
    let summary = serde_json::json!({
        "gw_sq": result.gw_sq,
        "n": x.len(),
        "m": y.len(),
        "restarts_run": result.restarts_run,
        "converged": result.converged,
    });
    write_json(&args.out.join("result.json"), &summary, &mut manifest)?;
    write_json(&args.out.join("coupling.json"), &result.coupling, &mut manifest)?;
    write_file(&args.out.join("history.csv"), &result.history_csv(), &mut manifest)?;
    manifest.write(&args.out)?;
    println!("gw_sq {}", result.gw_sq);
    Ok(())
}

pub fn make_env(args: &MakeEnvArgs) -> Result<()> {
    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("make-env", args)?;
    if let Some(path) = &args.maze {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        manifest.input(path);
        let mut spec = MazeSpec::from_ascii(&text)?;
        spec.sparse = args.sparse;
        spec.slip_prob = args.slip;
        if let Some(gamma) = args.gamma {
            spec.gamma = gamma;
        }
        let mdp = build_maze(&spec)?;
        write_json(&args.out.join("mdp.json"), &mdp, &mut manifest)?;
        write_json(&args.out.join("maze.json"), &spec, &mut manifest)?;
        if args.reflect {
            let (mirrored, phi, psi) = reflect_maze(&spec)?;
            let agent = apply_isometry(&mdp, &phi, &psi, Some(&spec.mirror_map()))?;
            write_json(&args.out.join("reflected_mdp.json"), &agent, &mut manifest)?;
            write_file(&args.out.join("reflected_maze.txt"), &mirrored.to_ascii(), &mut manifest)?;
            write_json(&args.out.join("isometry.json"), &serde_json::json!({ "phi": phi, "psi": psi }), &mut manifest)?;
        }
        println!("maze {}x{}: {} states, shortest path {:?}", spec.width, spec.height, mdp.n_states(), spec.shortest_path_len());
    } else {
        let n = args.chain.ok_or_else(|| anyhow!("either --maze or --chain is required"))?;
        if args.reflect {
            bail!("--reflect applies to mazes only");
        }
        let mut mdp = build_chain_env(n, args.pushes)?;
        if let Some(gamma) = args.gamma {
            mdp.gamma = gamma;
            mdp.validate()?;
        }
        write_json(&args.out.join("mdp.json"), &mdp, &mut manifest)?;
        println!("chain: {} states, {} pushes", mdp.n_states(), mdp.n_actions());
    }
    manifest.write(&args.out)
}

pub fn oracle(args: &OracleArgs) -> Result<()> {
    let mdp: TabularMetricMdp = read_json(&args.mdp)?;
    let vi = value_iteration(&mdp, args.tol)?;
    let traj = rollout(&mdp, &vi.policy, args.horizon, args.seed)?;

    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("oracle", args)?;
    manifest.input(&args.mdp);
    let greedy = vi.policy.greedy_actions();
    let mut values = String::from("state,value,greedy_action\n");
    for (s, v) in vi.values.iter().enumerate() {
        values.push_str(&format!("{s},{v},{}\n", greedy[s]));
    }
    let summary = serde_json::json!({
        "expected_return": vi.expected_return,
        "bellman_residual": vi.bellman_residual,
        "trajectory_len": traj.len(),
    });
    write_json(&args.out.join("policy.json"), &vi.policy, &mut manifest)?;
    write_json(&args.out.join("trajectory.json"), &traj, &mut manifest)?;
    write_file(&args.out.join("values.csv"), &values, &mut manifest)?;
    write_json(&args.out.join("summary.json"), &summary, &mut manifest)?;
    manifest.write(&args.out)?;
    println!("optimal return {} ({} expert steps)", vi.expected_return, traj.len());
    Ok(())
}

fn thread_cap() -> usize {
    std::env::var("GWIL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `job` for every seed on at most `GWIL_THREADS` threads, returning results in seed order.
fn run_seeds<T: Send>(seeds: &[u64], job: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new(seeds.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..thread_cap().min(seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let out = job(seed);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|s| s.expect("every seed ran")).collect()
}

fn timing_csv(log: &TrainLog) -> String {
    let mut out = String::from("episode,wall_ms\n");
    for r in &log.records {
        out.push_str(&format!("{},{:.3}\n", r.episode, r.wall_ms));
    }
    out
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn imitate(args: &ImitateArgs) -> Result<()> {
    let agent: TabularMetricMdp = read_json(&args.agent)?;
    let expert: Trajectory = read_json(&args.expert)?;
    if args.num_seeds == 0 {
        bail!(gwil_core::GwilError::Config("--num-seeds must be at least 1".into()));
    }
    let base = TrainConfig {
        episodes: args.episodes,
        horizon: args.horizon,
        learning_rate: args.learning_rate,
        entropy_temp: args.temp,
        entropy_temp_final: args.temp_final,
        gw_opts: SolveOptions { restarts: args.restarts, ..SolveOptions::default() },
        include_env_reward: args.sparse,
        beta: args.beta,
        eval_every: args.eval_every,
        include_t_a: args.include_t_a,
        ..TrainConfig::default()
    };
    base.validate()?;

    let seeds: Vec<u64> = (0..args.num_seeds).map(|k| args.seed + k).collect();
    let results = run_seeds(&seeds, |seed| {
        let cfg = TrainConfig { seed, ..base.clone() };
        match args.baseline {
            Baseline::Gw => train_gwil(&agent, &expert, &cfg),
            Baseline::Wasserstein => train_wasserstein_baseline(&agent, &expert, &cfg),
        }
    });

    create_dir(&args.out)?;
    let mut manifest = ManifestBuilder::new("imitate", serde_json::json!({ "args": args, "train": base }))?;
    manifest.input(&args.agent);
    manifest.input(&args.expert);
    let mut summary = String::from("seed,final_eval_return,final_eval_success,first_greedy_success,best_proxy_return,final10_proxy_return\n");
    for (seed, result) in seeds.iter().zip(results) {
        let (policy, log): (Policy, TrainLog) = result.with_context(|| format!("training seed {seed}"))?;
        let dir: PathBuf = args.out.join(format!("seed_{seed}"));
        create_dir(&dir)?;
        write_file(&dir.join("train_log.csv"), &log.to_csv(false), &mut manifest)?;
        write_json(&dir.join("policy.json"), &policy, &mut manifest)?;
        // wall-clock time is kept apart so the logs above are reproducible byte for byte
        fs::write(dir.join("timing.csv"), timing_csv(&log))?;
        let last = log.records.last().expect("at least one episode");
        summary.push_str(&format!(
            "{seed},{},{},{},{},{}\n",
            fmt_opt(last.eval_return),
            fmt_opt(last.eval_success),
            fmt_opt(log.first_greedy_success()),
            fmt_opt(log.best_proxy_return()),
            fmt_opt(log.final_mean_proxy_return(10)),
        ));
    }
    write_file(&args.out.join("summary.csv"), &summary, &mut manifest)?;
    manifest.write(&args.out)?;
    print!("{summary}");
    Ok(())
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let mut runs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(&args.run).with_context(|| format!("reading {}", args.run.display()))? {
        let path = entry?.path();
        let seed = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_prefix("seed_")).and_then(|s| s.parse().ok());
        if let Some(seed) = seed {
            runs.push((seed, path.join("train_log.csv")));
        }
    }
    if runs.is_empty() {
        bail!(std::io::Error::new(std::io::ErrorKind::NotFound, format!("no seed_* directories in {}", args.run.display())));
    }
    runs.sort();

    let mut out = String::new();
    for (k, (seed, path)) in runs.iter().enumerate() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            out.push_str(&format!("seed,{header}\n"));
        }
        for line in lines {
            out.push_str(&format!("{seed},{line}\n"));
        }
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} seeds exported to {}", runs.len(), args.out.display());
    Ok(())
}
