use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shockstab::calibrate::{calibrate, sensitivity_sweep, AnchorPoint, CoefficientGrid};
use shockstab::drift::{distribution_shift, DEFAULT_TAU};
use shockstab::fixture::{credit_fixture, FIXTURE_ROWS, FIXTURE_SEED};
use shockstab::model::{
    evaluate_pair, import_auc_table, parse_uplift_input, train_baseline, TrainConfig,
};
use shockstab::pipeline::{
    digest_tsv, emit_digest, emit_radial_data, load_report, run_pipeline, write_outputs,
    PipelineConfig,
};
use shockstab::schema::detect_schema;
use shockstab::split::{
    aggregate, monte_carlo, shock_segments, SplitSpec, DEFAULT_MC_RUNS, DEFAULT_TRAIN_FRACTION,
};
use shockstab::stability::{
    batch_uplift, stabilization_score, stabilization_uplift, DEFAULT_EPSILON,
};
use shockstab::synth::{
    self, EvtFamily, OutlierMask, OutlierSpec, DEFAULT_REGULARIZATION, DEFAULT_TAIL_SIGMA,
};
use shockstab::{load_csv, AucPoint, CsvOptions, Error, OutlierLevel, Result, UpliftCoefficients};

#[derive(Parser)]
#[command(
    name = "shockstab",
    version,
    about = "Drift and stability metrics for tabular classifiers under shocks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CsvArgs {
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Numeric columns with at most this many distinct values are read as categorical (0 = off).
    #[arg(long, visible_alias = "categorical-override", default_value_t = 0)]
    categorical_cutoff: usize,
    /// Cell values treated as missing, comma separated. Defaults to empty, NA and null.
    #[arg(long, value_delimiter = ',')]
    missing_tokens: Option<Vec<String>>,
}

impl CsvArgs {
    fn options(&self) -> Result<CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!(
                "delimiter `{}` is not ASCII",
                self.delimiter
            )));
        }
        let mut options = CsvOptions {
            delimiter: self.delimiter as u8,
            categorical_cutoff: self.categorical_cutoff,
            ..CsvOptions::default()
        };
        if let Some(tokens) = &self.missing_tokens {
            options.missing_tokens = tokens.clone();
        }
        Ok(options)
    }
}

#[derive(Args, Clone)]
struct CoeffArgs {
    #[arg(long, default_value_t = 100.0)]
    k1: f64,
    #[arg(long, default_value_t = 1000.0)]
    k2: f64,
    #[arg(long, default_value_t = 1000.0)]
    k3: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

impl CoeffArgs {
    fn coeffs(&self) -> Result<UpliftCoefficients> {
        UpliftCoefficients::new(self.k1, self.k2, self.k3)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oot,
    Oos,
}

#[derive(Args, Clone)]
struct SplitArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, visible_alias = "date-col")]
    date_column: Option<String>,
    #[arg(long)]
    shock_date: Option<String>,
    #[arg(long)]
    shock_fraction: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = DEFAULT_MC_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SplitArgs {
    fn spec(&self) -> Result<SplitSpec> {
        let mut spec = match self.mode {
            Mode::Oot => {
                let (Some(c), Some(d)) = (&self.date_column, &self.shock_date) else {
                    return Err(Error::Config(
                        "--mode oot needs --date-column and --shock-date".into(),
                    ));
                };
                SplitSpec::oot(c, d)
            }
            Mode::Oos => {
                let f = self
                    .shock_fraction
                    .ok_or_else(|| Error::Config("--mode oos needs --shock-fraction".into()))?;
                SplitSpec::oos(f)
            }
        };
        spec.train_fraction = self.train_fraction;
        spec.mc_runs = self.runs;
        spec.seed = self.seed;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Column kinds and summary statistics of a CSV file.
    Schema {
        file: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Distribution shift between a baseline and a shocked sample.
    ///
    /// Pass two files, or one file with --date-column and --shock-date.
    Ds {
        base: PathBuf,
        shock: Option<PathBuf>,
        #[arg(long)]
        date_column: Option<String>,
        #[arg(long)]
        shock_date: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// Columns to leave out, comma separated or repeated.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        /// Also write the report to this file.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Stabilization score of one model.
    Ss {
        #[arg(long)]
        auc_base: f64,
        #[arg(long)]
        auc_shock: f64,
        #[arg(long)]
        ds: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Stabilization uplift of model B over model A.
    Su {
        /// Baseline model AUCs as BASE,SHOCK.
        #[arg(long, value_parser = parse_auc_point)]
        a: AucPoint,
        /// Stabilized model AUCs as BASE,SHOCK.
        #[arg(long, value_parser = parse_auc_point)]
        b: AucPoint,
        #[arg(long)]
        ds: f64,
        #[command(flatten)]
        coeffs: CoeffArgs,
    },
    /// Uplift grid (levels x models) from an AUC file.
    SuGrid {
        file: PathBuf,
        /// Required for flat record lists; overrides the file's value otherwise.
        #[arg(long)]
        ds: Option<f64>,
        /// Summarize uplift computed run by run instead of on median AUCs.
        #[arg(long)]
        per_run: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        coeffs: CoeffArgs,
    },
    /// Train/test/shock row assignments for every Monte Carlo run.
    Split {
        file: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        /// Also write run_<i>/{train,test,shock}.csv here.
        #[arg(long, visible_alias = "out")]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Synthetic rows with extreme-value tail outliers.
    Synth {
        file: PathBuf,
        #[arg(long, default_value = "normal")]
        family: EvtFamily,
        /// Outlier share in percent, or "without".
        #[arg(long, visible_alias = "level", default_value = "without")]
        outliers_pct: OutlierLevel,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = DEFAULT_TAIL_SIGMA)]
        tail_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Columns that cannot be negative, comma separated or repeated.
        #[arg(long, value_delimiter = ',')]
        nonneg: Vec<String>,
        /// Columns to leave out before fitting, comma separated or repeated.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the outlier row indices.
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Grid search for the uplift slopes against expert anchors.
    Calibrate {
        anchors: PathBuf,
        /// Replace grid axes, e.g. k1=50,100,200 or k1=50,100,k3=500 (repeatable).
        #[arg(long)]
        grid: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Check whether uplift signs and best levels survive other slopes.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        ds: Option<f64>,
        #[arg(long)]
        grid: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Train the baseline model per run and report base/shock AUCs.
    TrainEval {
        file: PathBuf,
        #[arg(long)]
        label: String,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        exclude: Vec<String>,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[command(flatten)]
        csv: CsvArgs,
    },
    /// Full A-model / B-model experiment from a JSON config.
    Pipeline {
        config: PathBuf,
        #[arg(long, default_value = "shockstab-out")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Outlier levels, comma separated, e.g. without,5,10.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<OutlierLevel>>,
        #[arg(long)]
        per_run_su: bool,
    },
    /// Derived views of pipeline reports.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
    /// Write the bundled shocked credit dataset.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FIXTURE_ROWS)]
        rows: usize,
        #[arg(long, default_value_t = FIXTURE_SEED)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ReportKind {
    /// Radial-chart data per outlier level.
    Radial {
        reports: Vec<PathBuf>,
        #[arg(long)]
        nonzero: bool,
    },
    /// Best uplift per dataset.
    Digest {
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Tsv)]
        format: Format,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn parse_auc_point(text: &str) -> std::result::Result<AucPoint, String> {
    let (base, shock) = text.split_once(',').ok_or("expected BASE,SHOCK")?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{v}` is not a number"))
    };
    Ok(AucPoint::new(parse(base)?, parse(shock)?))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn grid_from(axes: &[String]) -> Result<CoefficientGrid> {
    let mut grid = CoefficientGrid::default();
    for a in axes {
        grid.set_axis(a)?;
    }
    Ok(grid)
}

fn uplift_input(
    path: &Path,
    ds: Option<f64>,
) -> Result<(Vec<shockstab::stability::UpliftRecord>, f64)> {
    let (records, file_ds) = parse_uplift_input(&read_text(path)?)?;
    let ds = ds
        .or(file_ds)
        .ok_or_else(|| Error::Config("--ds is required for flat record files".into()))?;
    Ok((records, ds))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Schema { file, csv } => {
            let frame = load_csv(&file, &csv.options()?)?;
            print_json(&detect_schema(&frame)?)?;
        }
        Command::Ds {
            base,
            shock,
            date_column,
            shock_date,
            tau,
            exclude,
            json,
            csv,
        } => {
            let opts = csv.options()?;
            let frame = load_csv(&base, &opts)?;
            let (pre, post, exclude) = match (shock, date_column, shock_date) {
                (Some(s), None, None) => (frame, load_csv(&s, &opts)?, exclude),
                (None, Some(c), Some(d)) => {
                    let (pre, post) = shock_segments(&frame, &SplitSpec::oot(&c, d))?;
                    let mut exclude = exclude;
                    exclude.push(c);
                    (pre, post, exclude)
                }
                _ => {
                    return Err(Error::Config(
                        "pass either two files or one file with --date-column and --shock-date"
                            .into(),
                    ))
                }
            };
            let report = distribution_shift(&pre, &post, tau, &exclude)?;
            if let Some(path) = json {
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                    .map_err(|e| Error::Io { path, source: e })?;
            }
            print_json(&report)?;
        }
        Command::Ss {
            auc_base,
            auc_shock,
            ds,
            epsilon,
        } => print_json(&stabilization_score(auc_base, auc_shock, ds, epsilon)?)?,
        Command::Su { a, b, ds, coeffs } => print_json(&stabilization_uplift(
            a,
            b,
            ds,
            &coeffs.coeffs()?,
            coeffs.epsilon,
        )?)?,
        Command::SuGrid {
            file,
            ds,
            per_run,
            format,
            coeffs,
        } => {
            let c = coeffs.coeffs()?;
            if per_run {
                let mut table = import_auc_table(&file)?;
                if let Some(ds) = ds {
                    table.ds = ds;
                }
                print_json(&table.per_run_uplift(&c, coeffs.epsilon)?)?;
            } else {
                let (records, ds) = uplift_input(&file, ds)?;
                let table = batch_uplift(&records, ds, &c, coeffs.epsilon)?;
                match format {
                    Format::Json => print_json(&table)?,
                    Format::Tsv => print!("{}", table.to_tsv()),
                }
            }
        }
        Command::Split {
            file,
            split,
            out_dir,
            csv,
        } => {
            let frame = load_csv(&file, &csv.options()?)?;
            let splits = monte_carlo(&frame, &split.spec()?)?;
            let summary: Vec<serde_json::Value> = splits
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "run_index": s.run_index,
                        "train_rows": s.train_rows,
                        "test_rows": s.test_rows,
                        "shock_rows": s.shock_rows,
                    })
                })
                .collect();
            if let Some(dir) = out_dir {
                for s in &splits {
                    let d = dir.join(format!("run_{}", s.run_index));
                    std::fs::create_dir_all(&d).map_err(|e| Error::Io {
                        path: d.clone(),
                        source: e,
                    })?;
                    s.train.save_csv(d.join("train.csv"))?;
                    s.test.save_csv(d.join("test.csv"))?;
                    s.shocked_test.save_csv(d.join("shock.csv"))?;
                }
            }
            print_json(&summary)?;
        }
        Command::Synth {
            file,
            family,
            outliers_pct: level,
            rows,
            tail_sigma,
            seed,
            nonneg,
            exclude,
            out,
            mask_out,
            csv,
        } => {
            level.validate()?;
            let train = load_csv(&file, &csv.options()?)?.drop_columns(&exclude);
            let generator = synth::fit(&train, DEFAULT_REGULARIZATION)?;
            let spec = OutlierSpec {
                family,
                outlier_fraction: level.fraction(),
                tail_sigma,
                total_rows: rows,
                seed,
                nonneg_columns: nonneg,
            };
            let raw = synth::generate(&generator, &spec)?;
            let batch = synth::postprocess(&raw, &spec)?;
            batch.frame.save_csv(&out)?;
            if let Some(path) = mask_out {
                let mask = OutlierMask {
                    outlier_rows: batch.outlier_rows(),
                    family,
                    fraction: spec.outlier_fraction,
                };
                std::fs::write(&path, serde_json::to_string_pretty(&mask)? + "\n")
                    .map_err(|e| Error::Io { path, source: e })?;
            }
        }
        Command::Calibrate {
            anchors,
            grid,
            epsilon,
        } => {
            let anchors: Vec<AnchorPoint> = serde_json::from_str(&read_text(&anchors)?)?;
            let result = calibrate(
                &anchors,
                &grid_from(&grid)?,
                &CoefficientGrid::default_bounds(),
                epsilon,
            )?;
            print_json(&result)?;
        }
        Command::Sweep {
            file,
            ds,
            grid,
            epsilon,
        } => {
            let (records, ds) = uplift_input(&file, ds)?;
            print_json(&sensitivity_sweep(
                &records,
                ds,
                &grid_from(&grid)?,
                epsilon,
            )?)?;
        }
        Command::TrainEval {
            file,
            label,
            split,
            exclude,
            epochs,
            csv,
        } => {
            let frame = load_csv(&file, &csv.options()?)?;
            let spec = split.spec()?;
            let mut drop = exclude;
            if let Some(d) = spec.date_column() {
                drop.push(d.to_string());
            }
            let config = TrainConfig {
                epochs,
                seed: spec.seed,
                ..TrainConfig::default()
            };
            let mut pairs = Vec::new();
            for mut s in monte_carlo(&frame, &spec)? {
                s.train = s.train.drop_columns(&drop);
                s.test = s.test.drop_columns(&drop);
                s.shocked_test = s.shocked_test.drop_columns(&drop);
                let model = train_baseline(&s.train, &label, &config)?;
                pairs.push(evaluate_pair(&model, &s)?);
            }
            let base: Vec<f64> = pairs.iter().map(|p| p.auc_base).collect();
            let shock: Vec<f64> = pairs.iter().map(|p| p.auc_shock).collect();
            print_json(&serde_json::json!({
                "runs": pairs,
                "auc_base": aggregate(&base)?,
                "auc_shock": aggregate(&shock)?,
                "shock_below_base": pairs.iter().filter(|p| p.auc_shock < p.auc_base).count(),
            }))?;
        }
        Command::Pipeline {
            config,
            out_dir,
            seed,
            runs,
            levels,
            per_run_su,
        } => {
            let mut config = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(r) = runs {
                config.split.mc_runs = r;
            }
            if let Some(l) = levels {
                config.levels = l;
            }
            config.per_run_su |= per_run_su;
            let report = run_pipeline(&config)?;
            write_outputs(&report, &out_dir)?;
            for l in &report.levels {
                if let Some(e) = &l.error {
                    eprintln!("level {} failed: {e}", l.outliers_pct);
                }
            }
            print!(
                "{}",
                digest_tsv(&emit_digest(std::slice::from_ref(&report)))
            );
            return Ok(report.exit_code());
        }
        Command::Report { kind } => match kind {
            ReportKind::Radial { reports, nonzero } => {
                let reports = load_reports(&reports)?;
                let data = emit_radial_data(&reports, nonzero);
                for w in &data.warnings {
                    eprintln!("warning: {w}");
                }
                print_json(&data)?;
            }
            ReportKind::Digest { reports, format } => {
                let rows = emit_digest(&load_reports(&reports)?);
                match format {
                    Format::Json => print_json(&rows)?,
                    Format::Tsv => print!("{}", digest_tsv(&rows)),
                }
            }
        },
        Command::Fixture { out, rows, seed } => credit_fixture(rows, seed)?.save_csv(&out)?,
    }
    Ok(0)
}

fn load_reports(paths: &[PathBuf]) -> Result<Vec<shockstab::pipeline::PipelineReport>> {
    if paths.is_empty() {
        return Err(Error::Config("at least one report is required".into()));
    }
    paths.iter().map(load_report).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
