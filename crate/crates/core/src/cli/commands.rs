//! Subcommand implementations.

use serde_json::json;

use super::config::{ExperimentConfig, ScheduleSpec};
use super::io::{fmt_f64, write_atomic};
use super::{ConvergenceArgs, MetricsArgs, SampleArgs, ScheduleArgs, TruncationArgs};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::metrics::{
    convergence_order, frechet_gaussian_detailed, local_truncation_rmse, prd_curve, sliced_w2,
    ConvergenceOptions, SampleSet, TruncationOptions,
};
use crate::solvers::{sample, SamplerConfig, SolverKind};

fn emit(out: Option<&std::path::Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, contents.as_bytes()),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn schedule_rows(grid: &TimeGrid) -> String {
    let mut s = String::from("index,t,sigma,lambda,alpha,sigma_vp\n");
    for (i, node) in grid.nodes().iter().enumerate() {
        s.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            fmt_f64(node.t),
            fmt_f64(node.sigma),
            fmt_f64(node.lambda),
            fmt_f64(node.alpha),
            fmt_f64(node.sigma_vp)
        ));
    }
    s
}

pub fn cmd_schedule(args: &ScheduleArgs) -> Result<()> {
    let process = args.process.to_spec();
    let sched = process.resolve()?;
    let spec = ScheduleSpec::from_kind_name(&args.kind, args.n, args.p, args.p1, args.p2, args.stop)?;
    let grid = spec.build(&sched)?;

    let mut out = String::new();
    match &args.compare {
        None => {
            let effective = json!({ "schedule": spec, "process": process });
            out.push_str(&format!("# config: {}\n", serde_json::to_string(&effective)?));
            out.push_str(&schedule_rows(&grid));
        }
        Some(other_kind) => {
            // The comparison schedule is built with its kind's defaults over
            // the same process and node count.
            let other = ScheduleSpec::from_kind_name(other_kind, args.n, None, None, None, Some(3))?;
            let grid_b = other.build(&sched)?;
            let effective = json!({ "schedule_a": spec, "schedule_b": other, "process": process });
            out.push_str(&format!("# config: {}\n", serde_json::to_string(&effective)?));
            out.push_str("index,t_a,sigma_a,lambda_a,t_b,sigma_b,lambda_b\n");
            for i in 0..grid.len() {
                let a = grid.node(i);
                let b = grid_b.node(i);
                out.push_str(&format!(
                    "{i},{},{},{},{},{},{}\n",
                    fmt_f64(a.t),
                    fmt_f64(a.sigma),
                    fmt_f64(a.lambda),
                    fmt_f64(b.t),
                    fmt_f64(b.sigma),
                    fmt_f64(b.lambda)
                ));
            }
        }
    }
    emit(args.out.as_deref(), &out)
}

pub fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let sched = config.process.resolve()?;
    let grid = config.schedule.build(&sched)?;
    let model = config.model.build()?;
    let sampler = SamplerConfig {
        grid,
        solver: config.solver,
        w: config.w,
        freeu: config.freeu,
        seed: config.seed,
    };
    let run = sample(
        &sampler,
        model.as_ref(),
        config.condition,
        config.n_samples,
        &sched,
        args.trajectories.is_some(),
    )?;

    let mut set = run.set;
    set.config = Some(serde_json::to_value(&config)?);
    let json = serde_json::to_string_pretty(&set)?;
    write_atomic(&args.out, json.as_bytes())?;

    if let Some(traj_path) = &args.trajectories {
        let trajectories = run.trajectories.unwrap_or_default();
        let dim = set.meta.dimension;
        let mut csv = String::from("sample_id,node_index,t,sigma");
        for i in 0..dim {
            csv.push_str(&format!(",x{i}"));
        }
        csv.push('\n');
        for traj in &trajectories {
            for (node_index, state) in traj.states.iter().enumerate() {
                let node = sampler.grid.node(node_index);
                csv.push_str(&format!(
                    "{},{node_index},{},{}",
                    traj.sample_id,
                    fmt_f64(node.t),
                    fmt_f64(node.sigma)
                ));
                for v in state {
                    csv.push(',');
                    csv.push_str(&fmt_f64(*v));
                }
                csv.push('\n');
            }
        }
        write_atomic(traj_path, csv.as_bytes())?;
    }

    println!(
        "wrote {} samples (dimension {}, ood {}) to {}",
        set.vectors.len(),
        set.meta.dimension,
        set.meta.ood_count,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_truncation(args: &TruncationArgs) -> Result<()> {
    let process = args.process.to_spec();
    let sched = process.resolve()?;
    let model = crate::models::ModelSpec::from_path(&args.model)?.build()?;
    let opts = TruncationOptions {
        m_states: args.m_states,
        ref_steps: args.ref_steps,
        seed: args.seed,
    };
    let rows = local_truncation_rmse(model.as_ref(), &sched, args.n, &opts)?;

    let effective = json!({
        "model": args.model.display().to_string(),
        "process": process,
        "n": args.n,
        "m_states": opts.m_states,
        "ref_steps": opts.ref_steps,
        "seed": opts.seed,
    });
    let mut out = format!("# config: {}\n", serde_json::to_string(&effective)?);
    out.push_str("sigma,rmse\n");
    for (sigma, rmse) in rows {
        out.push_str(&format!("{},{}\n", fmt_f64(sigma), fmt_f64(rmse)));
    }
    emit(args.out.as_deref(), &out)
}

pub fn cmd_convergence(args: &ConvergenceArgs) -> Result<()> {
    if args.steps.len() < 3 {
        return Err(Error::Config(format!(
            "--steps needs at least 3 comma-separated counts, got {:?}",
            args.steps
        )));
    }
    let process = args.process.to_spec();
    let sched = process.resolve()?;
    let model = crate::models::ModelSpec::from_path(&args.model)?.build()?;
    let opts = ConvergenceOptions {
        grid_p: args.grid_p,
        n_starts: args.n_starts,
        ref_steps: args.ref_steps,
        seed: args.seed,
    };

    let mut reports = serde_json::Map::new();
    for name in &args.solver {
        let kind: SolverKind = name.parse()?;
        let report = convergence_order(kind, model.as_ref(), &sched, &args.steps, &opts)?;
        reports.insert(kind.to_string(), serde_json::to_value(&report)?);
    }

    let doc = json!({
        "config": {
            "model": args.model.display().to_string(),
            "process": process,
            "solvers": args.solver,
            "steps": args.steps,
            "grid_p": opts.grid_p,
            "n_starts": opts.n_starts,
            "ref_steps": opts.ref_steps,
            "seed": opts.seed,
        },
        "solvers": reports,
    });
    emit(args.out.as_deref(), &format!("{:#}\n", doc))
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<()> {
    let reference = SampleSet::load(&args.a)?;
    let generated = SampleSet::load(&args.b)?;

    let fd = frechet_gaussian_detailed(&reference, &generated)?;
    let sw2 = sliced_w2(&reference, &generated, args.n_proj, args.seed)?;
    let prd = prd_curve(&reference, &generated, args.k, args.num_angles, args.seed)?;

    let doc = json!({
        "config": {
            "a": args.a.display().to_string(),
            "b": args.b.display().to_string(),
            "k": args.k,
            "num_angles": args.num_angles,
            "n_proj": args.n_proj,
            "seed": args.seed,
        },
        "fd": fd.distance,
        "fd_note": "FD (no embedding): Frechet distance between moment-fitted Gaussians, not comparable to embedding-based scores",
        "fd_clamped_eigenvalues": fd.clamped_eigenvalues,
        "sliced_w2": sw2,
        "prd": prd.points.iter().map(|(b, a)| vec![*b, *a]).collect::<Vec<_>>(),
        "prd_max_recall": prd.max_recall(),
        "prd_max_precision": prd.max_precision(),
    });
    emit(args.out.as_deref(), &format!("{:#}\n", doc))
}
