use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use geotv::eval::{city_accuracy, error_histogram, evaluate, gamma_sweep, holdout_split};
use geotv::formats::{self, FormatError};
use geotv::ground_truth::{derive_seeds, Gazetteer, GroundTruthRecord, SeedSource};
use geotv::robust::MedianOptions;
use geotv::solver::{infer as run_solver, InferReport, SolverConfig};
use geotv::synth::{generate, mislocate_seeds, SynthConfig};
use geotv::SeedSet;

use crate::manifest::{km_value, sidecar, write_file, RunManifest};
use crate::{EvalArgs, IngestArgs, InferArgs, SeedArgs, SynthArgs};

fn read<T>(path: &Path, parse: impl FnOnce(BufReader<File>) -> Result<T, FormatError>) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse(BufReader::new(file)).with_context(|| format!("{}", path.display()))
}

/// Sends the primary output to a file or, with `--stdout`, to standard output.
/// Returns the file written, if any.
fn emit<F>(out: Option<&Path>, stdout: bool, body: F) -> Result<Option<PathBuf>>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    if stdout {
        let handle = io::stdout();
        let mut lock = handle.lock();
        body(&mut lock).and_then(|_| lock.flush()).context("writing to standard output")?;
        return Ok(None);
    }
    match out {
        Some(path) => {
            write_file(path, body)?;
            Ok(Some(path.to_path_buf()))
        }
        None => bail!("no output: pass --out or --stdout"),
    }
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let records = read(&args.mentions, formats::read_mentions)?;
    let (net, report) = geotv::SocialNetwork::build_reciprocal(records);
    eprintln!(
        "ingest: {} records, {} directed pairs, {} reciprocated edges, {} users; dropped {} self-mentions, {} zero counts",
        report.records_in,
        report.directed_pairs,
        report.reciprocated_edges,
        net.node_count(),
        report.dropped_self_mentions,
        report.dropped_zero_counts
    );
    let written = emit(args.out.as_deref(), args.stdout, |w| formats::write_network(w, &net))?;
    if let Some(out) = written {
        let mut m = RunManifest::new("ingest");
        m.input("mentions", &args.mentions)?.output("network", &out)?;
        m.count("records_in", report.records_in)
            .count("directed_pairs", report.directed_pairs)
            .count("reciprocated_edges", report.reciprocated_edges)
            .count("dropped_self_mentions", report.dropped_self_mentions)
            .count("dropped_zero_counts", report.dropped_zero_counts)
            .count("users", net.node_count());
        m.write(&sidecar(&out))?;
    }
    Ok(())
}

fn subset(records: &[GroundTruthRecord], keep: &SeedSet) -> Vec<GroundTruthRecord> {
    records.iter().filter(|r| keep.contains(r.user)).copied().collect()
}

pub fn seed(args: &SeedArgs) -> Result<()> {
    let events = match &args.gps {
        Some(p) => read(p, formats::read_gps)?,
        None => Vec::new(),
    };
    let (claims, blank) = match &args.profiles {
        Some(p) => read(p, formats::read_profiles)?,
        None => (Vec::new(), 0),
    };
    let gaz = match &args.gazetteer {
        Some(p) => read(p, formats::read_gazetteer)?,
        None => Gazetteer::default(),
    };
    let now = args.now.unwrap_or(0);
    let (records, counts) = derive_seeds(&events, &claims, &gaz, now);
    let overlap = counts.gps_seeds + counts.gazetteer_seeds - counts.merged;
    eprintln!(
        "seed: {} GPS users -> {} GPS seeds; {} profile users -> {} gazetteer seeds ({} blank claims); {} users with both, GPS kept; {} seeds",
        counts.gps_users, counts.gps_seeds, counts.profile_users, counts.gazetteer_seeds, blank, overlap, counts.merged
    );

    let (train, test) = match args.holdout {
        Some(fraction) => {
            let rng_seed = args.rng_seed.context("--holdout needs --rng-seed")?;
            let all: SeedSet = records.iter().collect();
            let split = holdout_split(&all, fraction, rng_seed)?;
            eprintln!("seed: held out {} of {} seeds", split.test.len(), records.len());
            (subset(&records, &split.train), Some(subset(&records, &split.test)))
        }
        None => (records, None),
    };

    let written = emit(args.out.as_deref(), args.stdout, |w| formats::write_seeds(w, &train))?;
    let test_written = match (&test, &args.test_out) {
        (Some(t), Some(path)) => {
            write_file(path, |w| formats::write_seeds(w, t))?;
            Some(path)
        }
        _ => None,
    };
    if let Some(out) = written {
        let mut m = RunManifest::new("seed");
        for (role, p) in [("gps", &args.gps), ("profiles", &args.profiles), ("gazetteer", &args.gazetteer)] {
            if let Some(p) = p {
                m.input(role, p)?;
            }
        }
        m.output("seeds", &out)?;
        if let Some(p) = test_written {
            m.output("test", p)?;
        }
        if let Some(now) = args.now {
            m.config("now", now);
        }
        if let Some(f) = args.holdout {
            m.config("holdout", f).config("rng_seed", args.rng_seed);
        }
        m.count("gps_users", counts.gps_users)
            .count("gps_seeds", counts.gps_seeds)
            .count("profile_users", counts.profile_users)
            .count("blank_profiles", blank)
            .count("gazetteer_seeds", counts.gazetteer_seeds)
            .count("seeds", counts.merged)
            .count("train", train.len());
        if let Some(t) = &test {
            m.count("test", t.len());
        }
        m.write(&sidecar(&out))?;
    }
    Ok(())
}

fn write_iteration_report(w: &mut dyn Write, report: &InferReport) -> io::Result<()> {
    writeln!(w, "iteration,newly_located,located_total,accepted_updates,rejected_updates")?;
    for s in &report.iterations {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.iteration, s.newly_located, s.located_total, s.accepted_updates, s.rejected_updates
        )?;
    }
    Ok(())
}

pub fn infer(args: &InferArgs) -> Result<()> {
    let net = read(&args.network, formats::read_network)?;
    let seeds = read(&args.seeds, formats::read_seed_set)?;
    let cfg = SolverConfig {
        gamma_km: args.gamma,
        iterations: args.iterations,
        median: MedianOptions {
            tol_km: args.median_tol,
            max_iter: args.median_max_iter,
        },
        stop_when_unchanged: false,
        check_descent: args.check_descent,
    };
    let (state, report) = run_solver(&net, &seeds, &cfg)?;
    if report.seeds_outside_network > 0 {
        eprintln!(
            "infer: warning: {} of {} seeds are not in the network and pass through unchanged",
            report.seeds_outside_network, report.seed_count
        );
    }
    for s in &report.iterations {
        eprintln!(
            "infer: iteration {}: {} new, {} located, {} accepted, {} rejected",
            s.iteration, s.newly_located, s.located_total, s.accepted_updates, s.rejected_updates
        );
    }
    if args.check_descent {
        eprintln!("infer: {} descent violations", report.descent_violations);
    }

    let written = emit(args.out.as_deref(), args.stdout, |w| formats::write_estimates(w, &state))?;
    let report_path = args
        .report
        .clone()
        .or_else(|| written.as_ref().map(|p| p.with_extension("iterations.csv")));
    if let Some(p) = &report_path {
        write_file(p, |w| write_iteration_report(w, &report))?;
    }
    if let Some(out) = written {
        let mut m = RunManifest::new("infer");
        m.input("network", &args.network)?.input("seeds", &args.seeds)?;
        m.output("estimates", &out)?;
        if let Some(p) = &report_path {
            m.output("iterations", p)?;
        }
        m.config("gamma_km", km_value(cfg.gamma_km))
            .config("iterations", cfg.iterations)
            .config("median_tol_km", cfg.median.tol_km)
            .config("median_max_iter", cfg.median.max_iter);
        m.count("seeds", report.seed_count)
            .count("seeds_outside_network", report.seeds_outside_network)
            .count("located", state.len());
        if args.check_descent {
            m.count("descent_violations", report.descent_violations);
        }
        m.write(&sidecar(&out))?;
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    if args.stdout {
        bail!("synth writes several files; --stdout is not supported");
    }
    let base = SynthConfig::benchmark();
    let cfg = SynthConfig {
        num_cities: args.num_cities.unwrap_or(base.num_cities),
        users_per_city: args.users_per_city.unwrap_or(base.users_per_city),
        city_radius_km: args.city_radius.unwrap_or(base.city_radius_km),
        intra_edge_mean_degree: args.mean_degree.unwrap_or(base.intra_edge_mean_degree),
        inter_edge_fraction: args.inter_fraction.unwrap_or(base.inter_edge_fraction),
        seed_fraction: args.seed_fraction.unwrap_or(base.seed_fraction),
        rng_seed: match args.rng_seed {
            Some(s) => s,
            None if args.benchmark => base.rng_seed,
            None => bail!("--rng-seed is required"),
        },
    };
    let out = generate(&cfg)?;
    let (seeds, moved) = match args.mislocate {
        Some(fraction) => {
            let rng_seed = args.mislocate_rng_seed.context("--mislocate needs --mislocate-rng-seed")?;
            mislocate_seeds(&out, &cfg, fraction, rng_seed)
        }
        None => (out.seeds.clone(), Vec::new()),
    };

    let dir = &args.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = |name: &str| dir.join(name);
    write_file(&path("network.tsv"), |w| formats::write_network(w, &out.network))?;
    write_file(&path("truth.tsv"), |w| formats::write_seed_set(w, &out.truth, SeedSource::Planted))?;
    write_file(&path("seeds.tsv"), |w| formats::write_seed_set(w, &seeds, SeedSource::Planted))?;
    write_file(&path("test.tsv"), |w| {
        formats::write_seed_set(w, &out.non_seed_truth(), SeedSource::Planted)
    })?;
    write_file(&path("assignments.tsv"), |w| formats::write_assignments(w, &out.assignment))?;
    write_file(&path("cities.tsv"), |w| formats::write_city_table(w, &out.cities))?;

    let inter = out.inter_city_edges();
    eprintln!(
        "synth: {} cities, {} users, {} edges ({} between cities), {} seeds{}",
        out.cities.len(),
        out.truth.len(),
        out.network.edge_count(),
        inter,
        seeds.len(),
        if moved.is_empty() {
            String::new()
        } else {
            format!(", {} mislocated", moved.len())
        }
    );

    let mut m = RunManifest::new("synth");
    m.config("num_cities", cfg.num_cities)
        .config("users_per_city", cfg.users_per_city)
        .config("city_radius_km", cfg.city_radius_km)
        .config("intra_edge_mean_degree", cfg.intra_edge_mean_degree)
        .config("inter_edge_fraction", cfg.inter_edge_fraction)
        .config("seed_fraction", cfg.seed_fraction)
        .config("rng_seed", cfg.rng_seed);
    if let Some(f) = args.mislocate {
        m.config("mislocate", f).config("mislocate_rng_seed", args.mislocate_rng_seed);
    }
    for name in ["network", "truth", "seeds", "test", "assignments", "cities"] {
        m.output(name, &path(&format!("{name}.tsv")))?;
    }
    m.count("users", out.truth.len())
        .count("edges", out.network.edge_count())
        .count("inter_city_edges", inter)
        .count("seeds", seeds.len())
        .count("mislocated", moved.len());
    m.write(&path("manifest.json"))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let estimates = read(&args.estimates, formats::read_estimates)?;
    let truth = read(&args.truth, formats::read_seed_set)?;

    let truth_users: HashSet<_> = truth.users().collect();
    let unlocated = truth.users().filter(|u| estimates.get(*u).is_none()).count();
    let outside = estimates.iter().filter(|e| !truth_users.contains(&e.user)).count();
    if unlocated > 0 || outside > 0 {
        eprintln!(
            "eval: warning: {unlocated} of {} truth users have no estimate; {outside} of {} estimates have no truth",
            truth.len(),
            estimates.len()
        );
    }

    let mut report = evaluate(&estimates, &truth);
    if let Some(p) = &args.cities {
        let table = read(p, formats::read_city_table)?;
        report.city_accuracy = city_accuracy(&estimates, &truth, &table, args.min_pop)?;
    }
    let histogram = error_histogram(&estimates, &truth, &args.bins)?;
    let sweep = if args.sweep.is_empty() {
        None
    } else {
        let net = read(args.network.as_ref().context("--sweep needs --network")?, formats::read_network)?;
        let train = read(args.seeds.as_ref().context("--sweep needs --seeds")?, formats::read_seed_set)?;
        let base = SolverConfig {
            iterations: args.iterations,
            ..SolverConfig::default()
        };
        Some(gamma_sweep(&net, &train, &truth, &args.sweep, &base)?)
    };

    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
    eprintln!(
        "eval: coverage {:.4} ({} of {}), median error {} km, mean error {} km, city accuracy {}",
        report.coverage,
        report.located,
        report.test_users,
        fmt(report.median_error_km),
        fmt(report.mean_error_km),
        report.city_accuracy.map_or("NA".to_string(), |a| format!("{a:.4}"))
    );

    if args.stdout {
        let handle = io::stdout();
        let mut lock = handle.lock();
        formats::write_eval_summary(&mut lock, &report).context("writing to standard output")?;
    }
    let Some(dir) = &args.out_dir else {
        if !args.stdout {
            bail!("no output: pass --out-dir or --stdout");
        }
        return Ok(());
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = |name: &str| dir.join(name);
    write_file(&path("summary.csv"), |w| formats::write_eval_summary(w, &report))?;
    write_file(&path("iterations.csv"), |w| formats::write_per_iteration(w, &report))?;
    write_file(&path("histogram.csv"), |w| formats::write_histogram(w, &args.bins, &histogram))?;
    if let Some(rows) = &sweep {
        write_file(&path("sweep.csv"), |w| formats::write_sweep(w, rows))?;
    }

    let mut m = RunManifest::new("eval");
    m.input("estimates", &args.estimates)?.input("truth", &args.truth)?;
    if let Some(p) = &args.cities {
        m.input("cities", p)?;
        m.config("min_population", args.min_pop);
    }
    if let Some(p) = &args.network {
        m.input("network", p)?;
    }
    if let Some(p) = &args.seeds {
        m.input("seeds", p)?;
    }
    if sweep.is_some() {
        let gammas: Vec<_> = args.sweep.iter().map(|&g| km_value(g)).collect();
        m.config("sweep_gamma_km", gammas).config("sweep_iterations", args.iterations);
    }
    m.config("histogram_bins_km", args.bins.clone());
    for name in ["summary", "iterations", "histogram"] {
        m.output(name, &path(&format!("{name}.csv")))?;
    }
    if sweep.is_some() {
        m.output("sweep", &path("sweep.csv"))?;
    }
    m.count("truth_users", truth.len())
        .count("located", report.located)
        .count("estimates_without_truth", outside);
    m.write(&path("manifest.json"))
}

