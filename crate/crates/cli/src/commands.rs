use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use leapgrad::analysis::{self, dyadic_steps};
use leapgrad::grad::{
    comparison_csv, gradient, reports_csv, GradientReport, Method, Problem, SquaredNorm,
};
use leapgrad::{
    fmt_f64, integrate, AugmentedState, Damping, Dynamics, ErrorNorm, LinearScalarField, MlpField,
    MlpWeights, ParamVec, SolverConfig, StateVec, StepMode, StoragePolicy, VectorField,
};

use crate::args::{
    Command, FieldArgs, FieldKind, GradArgs, IntegrateArgs, MemoryArgs, MethodArg, NormKind,
    OrderArgs, SolverArgs, StabilityArgs, Study, ToyArgs,
};

#[derive(Debug)]
pub enum CliError {
    Clap(clap::Error),
    Usage(String),
    Run(leapgrad::Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Clap(_) | CliError::Usage(_) => 2,
            CliError::Run(
                leapgrad::Error::InvalidConfig(_)
                | leapgrad::Error::Dimension { .. }
                | leapgrad::Error::EmptyInterval { .. },
            ) => 2,
            CliError::Run(_) | CliError::Io(..) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Clap(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<leapgrad::Error> for CliError {
    fn from(e: leapgrad::Error) -> Self {
        CliError::Run(e)
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Integrate(a) => cmd_integrate(a),
        Command::Grad(a) => cmd_grad(a),
        Command::Study(Study::Toy(a)) => study_toy(a),
        Command::Study(Study::Order(a)) => study_order(a),
        Command::Study(Study::Stability(a)) => study_stability(a),
        Command::Study(Study::Memory(a)) => study_memory(a),
    }
}

/// Collects artifacts and writes them all at the end.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn write(self) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::Io(self.dir.clone(), e))?;
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            fs::write(&path, contents).map_err(|e| CliError::Io(path.clone(), e))?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn solver_config(a: &SolverArgs) -> Result<SolverConfig, CliError> {
    let cfg = SolverConfig {
        rtol: a.rtol,
        atol: a.atol,
        h_init: a.h_init,
        h_min: a.h_min,
        h_max: a.h_max,
        max_rejects_per_step: a.max_rejects,
        damping: Damping::new(a.eta)?,
        mode: a.fixed_h.map_or(StepMode::Adaptive, StepMode::Fixed),
        norm: match a.norm {
            NormKind::Augmented => ErrorNorm::Augmented,
            NormKind::State => ErrorNorm::State,
        },
        ..SolverConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

enum Field {
    Linear(LinearScalarField),
    Mlp(MlpField),
}

impl Field {
    fn as_dyn(&self) -> &dyn VectorField {
        match self {
            Field::Linear(f) => f,
            Field::Mlp(f) => f,
        }
    }
}

fn read_weights(path: &Path) -> Result<MlpWeights, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let reader = BufReader::new(file);
    let w = if path.extension().is_some_and(|e| e == "csv") {
        MlpWeights::read_csv(reader)?
    } else {
        MlpWeights::read_binary(reader)?
    };
    Ok(w)
}

fn write_weights(w: &MlpWeights, path: &Path) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "csv") {
        w.write_csv(&mut bytes)?;
    } else {
        w.write_binary(&mut bytes)?;
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.to_path_buf(), e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// The field, initial state and parameters described by the flags.
fn build_problem(a: &FieldArgs) -> Result<(Field, StateVec, ParamVec), CliError> {
    let z0 = StateVec::new(a.z0.clone())?;
    match a.field {
        FieldKind::Linear => Ok((
            Field::Linear(LinearScalarField::with_dim(z0.len())),
            z0,
            ParamVec::new(vec![a.alpha]),
        )),
        FieldKind::Mlp => {
            let (field, weights) = match &a.weights {
                Some(path) => {
                    let w = read_weights(path)?;
                    (w.field()?, w)
                }
                None => {
                    let f = MlpField::new(z0.len(), &a.hidden)?;
                    let theta = f.init_params(a.seed);
                    let w = MlpWeights::new(&f, a.seed, theta)?;
                    (f, w)
                }
            };
            if field.dim_state() != z0.len() {
                return Err(CliError::Usage(format!(
                    "z0 has {} components but the MLP expects {}",
                    z0.len(),
                    field.dim_state()
                )));
            }
            if let Some(path) = &a.save_weights {
                write_weights(&weights, path)?;
            }
            Ok((Field::Mlp(field), z0, weights.params))
        }
    }
}

fn cmd_integrate(a: IntegrateArgs) -> Result<(), CliError> {
    let mut out = Artifacts::new(&a.output.out);
    let cfg = solver_config(&a.solver)?;
    let (field, z0, theta) = build_problem(&a.field)?;
    let (record, log) = integrate(
        field.as_dyn(),
        &z0,
        a.field.t0,
        a.t_end,
        &theta,
        &cfg,
        StoragePolicy::Checkpoints,
    )?;
    out.add("trajectory.csv", log.trajectory_csv());
    out.add("record.csv", record.to_csv());
    out.write()?;
    let c = record.counters;
    let z_end: Vec<String> = record.end_state.z.iter().map(|x| fmt_f64(*x)).collect();
    println!(
        "N_t={} accepted={} rejected={} f_evals={} m_avg={} z_T={}",
        record.grid_steps(),
        c.accepted_steps,
        c.rejected_trials,
        c.f_evals,
        fmt_f64(c.m_avg()),
        z_end.join(",")
    );
    Ok(())
}

fn cmd_grad(a: GradArgs) -> Result<(), CliError> {
    let mut out = Artifacts::new(&a.output.out);
    let cfg = solver_config(&a.solver)?;
    let (field, z0, theta) = build_problem(&a.field)?;
    let mut problem = Problem::new(field.as_dyn(), z0, a.field.t0, a.t_end, theta, cfg);
    problem.options.couple_v0 = !a.no_v0_coupling;
    let methods: Vec<Method> = match a.method {
        MethodArg::Mali => vec![Method::Mali],
        MethodArg::Adjoint => vec![Method::Adjoint],
        MethodArg::Aca => vec![Method::Aca],
        MethodArg::Naive => vec![Method::Naive],
        MethodArg::Fd => vec![Method::Fd],
        MethodArg::All => Method::ALL.to_vec(),
    };
    let reports = methods
        .iter()
        .map(|&m| gradient(m, &problem, &SquaredNorm))
        .collect::<Result<Vec<GradientReport>, _>>()?;
    let csv = reports_csv(&reports);
    print!("{csv}");
    out.add("gradients.csv", csv);
    if a.method == MethodArg::All {
        let cmp = comparison_csv(&reports);
        print!("{cmp}");
        out.add("comparison.csv", cmp);
    }
    out.write()
}

fn study_toy(a: ToyArgs) -> Result<(), CliError> {
    let cfg = solver_config(&a.solver)?;
    let mut rows = Vec::new();
    for &alpha in &a.alphas {
        rows.extend(analysis::toy_study(alpha, a.z0, &a.t_list, &cfg)?.rows);
    }
    let study = analysis::ToyStudy { rows };
    let mut out = Artifacts::new(&a.output.out);
    out.add("toy.csv", study.to_csv());
    if a.svg {
        out.add("toy.svg", study.to_svg());
    }
    out.write()
}

fn study_order(a: OrderArgs) -> Result<(), CliError> {
    let field = LinearScalarField::new();
    let theta = [a.alpha];
    let hs = dyadic_steps(a.h_from, a.h_to);
    let study = if a.global {
        analysis::global_order_study(
            &field,
            &StateVec::new(vec![a.z0])?,
            0.0,
            a.t_end,
            &theta,
            &hs,
        )?
    } else {
        let base = AugmentedState::new(
            StateVec::new(vec![a.z0])?,
            StateVec::new(vec![a.alpha * a.z0 + a.v0_offset])?,
            0.0,
        )?;
        analysis::order_study(&field, &base, &theta, &hs)?
    };
    let slope = |s: Option<f64>| s.map_or_else(|| "exact".to_string(), |x| format!("{x:.4}"));
    println!(
        "slope_z={} slope_v={}",
        slope(study.slope_z),
        slope(study.slope_v)
    );
    let mut out = Artifacts::new(&a.output.out);
    out.add("order.csv", study.to_csv());
    if a.svg {
        let title = if a.global {
            "end-time error"
        } else {
            "one-step error"
        };
        out.add("order.svg", study.to_svg(title));
    }
    out.write()
}

fn study_stability(a: StabilityArgs) -> Result<(), CliError> {
    let grids = a
        .eta
        .iter()
        .map(|&eta| {
            analysis::stability_map(
                eta,
                (a.re_min, a.re_max),
                (a.im_min, a.im_max),
                a.resolution,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    for g in &grids {
        println!("eta={} stable_cells={}", g.eta, g.stable_cells());
    }
    let mut out = Artifacts::new(&a.output.out);
    out.add("stability.csv", analysis::stability_csv(&grids));
    if a.svg {
        for g in &grids {
            out.add(format!("stability_eta_{}.svg", g.eta), g.to_svg());
        }
    }
    out.write()
}

fn parse_tol(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || {
        CliError::Usage(format!(
            "tolerance pair must look like rtol:atol, got `{s}`"
        ))
    };
    let (r, a) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        r.trim().parse().map_err(|_| bad())?,
        a.trim().parse().map_err(|_| bad())?,
    ))
}

fn study_memory(a: MemoryArgs) -> Result<(), CliError> {
    let mut out = Artifacts::new(&a.output.out);
    let template = solver_config(&a.solver)?;
    let tols = a
        .tols
        .iter()
        .map(|s| parse_tol(s))
        .collect::<Result<Vec<_>, _>>()?;
    let (field, z0, theta) = build_problem(&a.field)?;
    let rows = analysis::memory_study(
        field.as_dyn(),
        &z0,
        a.field.t0,
        a.t_end,
        &theta,
        &tols,
        &template,
    )?;
    out.add("memory.csv", analysis::memory_csv(&rows));
    if a.svg {
        out.add("memory.svg", analysis::memory_svg(&rows));
    }
    out.write()
}
