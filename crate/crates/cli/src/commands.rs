use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use refactor_core::assoc::{run_pipeline, test_columns, write_qq_table, AssocScenario};
use refactor_core::experiment::{run_experiment, ExperimentSpec, ScanVariable};
use refactor_core::matcore::{read_matrix_file, write_matrix};
use refactor_core::synth::{NoiseDistribution, NoiseSpec, SupportStyle};
use refactor_core::theory::{
    improvement_grid, verify_theorem, write_improvement_table, PreconditionPolicy, TheoryConstants,
    VerifyParams,
};
use refactor_core::{denoise, EstimatorConfig, StarStatistic, Variant};

use crate::{
    AssocArgs, CliError, Command, CommonArgs, DenoiseArgs, NoiseArgs, SimulateArgs, StarArg, VerifyArgs,
};

pub(crate) fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => with_threads(&a.common, || simulate(&a)),
        Command::Denoise(a) => with_threads(&a.common, || denoise_cmd(&a)),
        Command::Verify(a) => with_threads(&a.common, || verify(&a)),
        Command::Assoc(a) => with_threads(&a.common, || assoc(&a)),
    }
}

fn with_threads<F>(common: &CommonArgs, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    match common.threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Buffered writer on `path`, or on standard output.
fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(io_error(p))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

/// Maps an I/O failure inside a core writer onto the output path.
fn at_path(err: refactor_core::Error, path: Option<&PathBuf>) -> CliError {
    match (err, path) {
        (refactor_core::Error::Io(source), Some(p)) => CliError::Io {
            path: p.clone(),
            source,
        },
        (err, _) => CliError::Core(err),
    }
}

fn noise_spec(args: &NoiseArgs) -> NoiseSpec {
    NoiseSpec {
        distribution: args.noise.unwrap_or(NoiseDistribution::Gaussian),
        sigma: args.sigma.unwrap_or(1.0),
        standardize: !args.raw_noise,
    }
}

fn default_scan_values(scan: ScanVariable) -> Vec<f64> {
    match scan {
        ScanVariable::T => vec![20.0, 60.0, 100.0, 140.0, 180.0],
        ScanVariable::X => vec![0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0],
        ScanVariable::N => vec![100.0, 200.0, 400.0, 800.0],
    }
}

pub(crate) fn experiment_spec(a: &SimulateArgs) -> ExperimentSpec {
    let defaults = ExperimentSpec::default();
    let scan = a.scan.unwrap_or(ScanVariable::T);
    ExperimentSpec {
        scan,
        scan_values: a
            .values
            .as_ref()
            .map(|v| v.0.clone())
            .unwrap_or_else(|| default_scan_values(scan)),
        rows: a.m.unwrap_or(defaults.rows),
        cols: a.n.unwrap_or(defaults.cols),
        rank: a.r.unwrap_or(defaults.rank),
        active: a.t.unwrap_or(defaults.active),
        strength: a.x.unwrap_or(defaults.strength),
        noise: noise_spec(&a.noise),
        support_style: a.support.unwrap_or(defaults.support_style),
        replicates: a.replicates.unwrap_or(defaults.replicates),
        estimators: a.estimators.as_ref().map(|e| e.0.clone()).unwrap_or(defaults.estimators),
        master_seed: a.common.seed.unwrap_or(0),
    }
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let spec = experiment_spec(a);
    let result = run_experiment(&spec)?;
    let out = output(a.common.out.as_ref())?;
    result.write_table(out).map_err(|e| at_path(e, a.common.out.as_ref()))
}

fn denoise_cmd(a: &DenoiseArgs) -> Result<(), CliError> {
    let input = a
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("denoise needs --input".into()))?;
    let rank = a.r.ok_or_else(|| CliError::Usage("denoise needs --r".into()))?;
    let variant = a.variant.unwrap_or(Variant::Refactor);
    let keep = match (variant.selects_columns(), a.t) {
        (true, Some(t)) => t,
        (true, None) => return Err(CliError::Usage(format!("{variant} needs --t"))),
        (false, _) => 0,
    };
    let star = match a.star_statistic {
        Some(StarArg::Correlation) => StarStatistic::Correlation,
        _ => StarStatistic::Inner,
    };
    let y = read_matrix_file(input).map_err(|e| match e {
        refactor_core::Error::Io(source) => CliError::Io {
            path: input.clone(),
            source,
        },
        other => CliError::Core(other),
    })?;
    let config = EstimatorConfig::new(variant, rank, keep).with_star_statistic(star);
    let result = denoise(&y, &config)?;

    let retained = result.selection.as_ref().map(|s| {
        let cols: Vec<String> = s.retained_sorted().iter().map(|j| (j + 1).to_string()).collect();
        format!("retained: {}", cols.join(" "))
    });
    let out = output(a.common.out.as_ref())?;
    write_matrix(out, &result.estimate).map_err(|e| at_path(e, a.common.out.as_ref()))?;
    if let Some(line) = retained {
        // Keep standard output clean for the matrix when no file was given.
        if a.common.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

pub(crate) fn verify_params(a: &VerifyArgs) -> VerifyParams {
    let defaults = VerifyParams::default();
    let dc = TheoryConstants::default();
    VerifyParams {
        rows: a.m.unwrap_or(defaults.rows),
        cols: a.n.unwrap_or(defaults.cols),
        strength: a.x.unwrap_or(defaults.strength),
        active: a.t.unwrap_or(defaults.active),
        noise: noise_spec(&a.noise),
        support_style: a.support.unwrap_or(SupportStyle::Flat),
        variant: a.variant.unwrap_or(defaults.variant),
        constants: TheoryConstants {
            c: a.c.unwrap_or(dc.c),
            c0: a.c0.unwrap_or(dc.c0),
            alpha: a.alpha.unwrap_or(dc.alpha),
        },
        epsilon: a.epsilon.unwrap_or(defaults.epsilon),
        policy: if a.strict {
            PreconditionPolicy::Strict
        } else {
            PreconditionPolicy::Explicit
        },
        pass_threshold: a.threshold.unwrap_or(defaults.pass_threshold),
        master_seed: a.common.seed.unwrap_or(0),
    }
}

fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let theorem = a
        .theorem
        .ok_or_else(|| CliError::Usage("verify needs --theorem".into()))?;
    let params = verify_params(a);
    let seeds = a.seeds.unwrap_or(100);
    let report = verify_theorem(theorem, &params, seeds)?;

    let th = &report.thresholds;
    println!(
        "beta {:.6} weak-signal threshold {:.6} BBP threshold {:.6}",
        th.beta, th.weak_signal_threshold, th.bbp_threshold
    );
    println!(
        "b_j^2 condition: min {:.6e} vs bound {:.6e} ({}); sparsity condition: t = {} vs bound {:.3} ({})",
        th.min_active_b_sq,
        th.support_bound,
        if th.support_condition { "met" } else { "not met" },
        params.active,
        th.sparsity_bound,
        if th.sparsity_condition { "met" } else { "not met" },
    );
    println!("{}", report.summary());

    if let Some(path) = a.common.out.as_ref() {
        report
            .write_table(output(Some(path))?)
            .map_err(|e| at_path(e, Some(path)))?;
    }
    if let Some(grid) = a.grid.as_ref() {
        let cells: Vec<(usize, usize, f64)> = grid.0.iter().map(|g| (g.0, g.1, g.2)).collect();
        let rows = improvement_grid(&params, &cells, seeds)?;
        write_improvement_table(output(a.grid_out.as_ref())?, &rows)
            .map_err(|e| at_path(e, a.grid_out.as_ref()))?;
    }
    if !report.holds() {
        return Err(CliError::Assertion(format!(
            "{theorem} held in {:.3} of replicates, below the threshold {:.2}",
            report.frequency(),
            params.pass_threshold
        )));
    }
    Ok(())
}

pub(crate) fn assoc_scenario(a: &AssocArgs) -> AssocScenario {
    let base = if a.dense {
        AssocScenario::dense_confounder()
    } else {
        AssocScenario::default()
    };
    let noise = NoiseSpec {
        distribution: a.noise.noise.unwrap_or(base.noise.distribution),
        sigma: a.noise.sigma.unwrap_or(base.noise.sigma),
        standardize: !a.noise.raw_noise,
    };
    let scenario = AssocScenario {
        subjects: a.subjects.unwrap_or(base.subjects),
        sites: a.sites.unwrap_or(base.sites),
        active: a.active.unwrap_or(base.active),
        strength: a.x.unwrap_or(base.strength),
        noise,
        link: a.link.unwrap_or(base.link),
    };
    if a.null {
        scenario.null()
    } else {
        scenario
    }
}

fn assoc(a: &AssocArgs) -> Result<(), CliError> {
    let scenario = assoc_scenario(a);
    let data = scenario.generate(a.common.seed.unwrap_or(0))?;
    let keep = scenario.active;
    let fit = |variant| run_pipeline(&data.y, &data.phenotype, &EstimatorConfig::new(variant, 1, keep));
    let refactor = fit(Variant::RefactorStar)?;
    let tsvd = fit(Variant::Tsvd)?;
    let jl = fit(Variant::JlStar)?;
    let raw = test_columns(&data.y, &data.phenotype)?;
    eprintln!(
        "inflation: none {:.4} refactor-star {:.4} tsvd {:.4} jl-star {:.4}",
        raw.inflation(),
        refactor.inflation(),
        tsvd.inflation(),
        jl.inflation()
    );
    write_qq_table(output(a.common.out.as_ref())?, &refactor, &tsvd, &jl)
        .map_err(|e| at_path(e, a.common.out.as_ref()))
}
