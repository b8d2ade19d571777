use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geopinn::cases::{self, Case, Instance};
use geopinn::model::Checkpoint;
use geopinn::{fieldio, gpfield, Error, GridField};

#[derive(Parser)]
#[command(name = "geopinn", version, about = "Label-free convolutional PDE solver on irregular 2-D domains")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the mesh(es) of a case and write them as mesh files.
    Mesh {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a case; writes checkpoint.bin and history.csv.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured iteration count.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict with a trained checkpoint and score against the oracle.
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Parameter values (or source sample indices); default is every
        /// training and test parameter of the case.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        params: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the case with the classical finite-difference solver.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one K-L source field.
    SampleSource {
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn out_dir(out: Option<PathBuf>, case: &Case) -> geopinn::Result<PathBuf> {
    let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&case.def.name));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn all_instances(case: &Case) -> Vec<(&'static str, &Instance)> {
    case.train.iter().map(|i| ("train", i)).chain(case.test.iter().map(|i| ("test", i))).collect()
}

fn file_label(inst: &Instance) -> String {
    match inst.param.label().as_str() {
        "-" => String::new(),
        l => format!("_{l}"),
    }
}

fn run(cmd: Cmd) -> geopinn::Result<()> {
    match cmd {
        Cmd::Mesh { config, out } => {
            let case = cases::build_case(&config)?;
            let dir = out_dir(out, &case)?;
            for (_, inst) in all_instances(&case) {
                let path = dir.join(format!("mesh{}.txt", file_label(inst)));
                inst.mesh.write(&path)?;
                let g = inst.mesh.grid;
                let jmin = inst.metrics().jac.iter().copied().fold(f64::INFINITY, f64::min);
                println!("{}  {}x{}  min J {jmin:.4e}", path.display(), g.n_xi, g.n_eta);
            }
        }
        Cmd::Train { config, seed, iterations, out } => {
            let mut def = cases::CaseDefinition::read(&config)?;
            if let Some(n) = iterations {
                def.train.iterations = n;
            }
            let seed = seed.unwrap_or(def.train.seed);
            let case = Case::new(def)?;
            let dir = out_dir(out, &case)?;
            let total = case.def.train.iterations;
            let t0 = std::time::Instant::now();
            let outcome = cases::train(&case, seed, Some(&dir), |r| {
                if r.iteration == 1 || r.iteration % 100 == 0 || r.iteration == total {
                    eprintln!("iter {:>6}  loss {:.4e}  {:.1}s", r.iteration, r.loss, t0.elapsed().as_secs_f64());
                }
            })?;
            println!(
                "trained {} iterations; final loss {:.4e}; wrote {}",
                outcome.checkpoint.iteration,
                outcome.history.losses().last().copied().unwrap_or(f64::NAN),
                dir.join("checkpoint.bin").display()
            );
        }
        Cmd::Eval { config, checkpoint, params, out } => {
            let case = cases::build_case(&config)?;
            let ckpt = Checkpoint::read(&checkpoint)?;
            if ckpt.net.config != case.net_config() {
                return Err(Error::Invalid("checkpoint network does not match the case".into()));
            }
            let extra = params.iter().map(|p| case.parse_param(p).and_then(|v| case.instance(v))).collect::<geopinn::Result<Vec<_>>>()?;
            let rows: Vec<(&str, &Instance)> = if extra.is_empty() {
                all_instances(&case)
            } else {
                extra.iter().map(|i| ("given", i)).collect()
            };
            let dir = out_dir(out, &case)?;
            let insts: Vec<&Instance> = rows.iter().map(|r| r.1).collect();
            let results = cases::evaluate(&ckpt.net, &insts)?;
            let mut csv = String::from("param,split,loss,relative_error\n");
            println!("{:>12} {:>6} {:>12} {:>14}", "param", "split", "loss", "rel. error");
            for ((split, inst), r) in rows.iter().zip(&results) {
                let err = r.error.map_or("property-only".to_string(), |e| format!("{e:.4}"));
                println!("{:>12} {:>6} {:>12.4e} {:>14}", r.label, split, r.loss, err);
                csv.push_str(&format!("{},{split},{:e},{}\n", r.label, r.loss, r.error.map_or("property-only".into(), |e| format!("{e:e}"))));
                let tag = file_label(inst);
                fieldio::write(&r.fields, &dir.join(format!("field{tag}.txt")))?;
                inst.mesh.write(&dir.join(format!("mesh{tag}.txt")))?;
            }
            std::fs::write(dir.join("errors.csv"), csv)?;
            let errs: Vec<f64> = results.iter().filter_map(|r| r.error).collect();
            if !errs.is_empty() {
                println!("mean relative error {:.4}", errs.iter().sum::<f64>() / errs.len() as f64);
            }
        }
        Cmd::Oracle { config, out } => {
            let case = cases::build_case(&config)?;
            let dir = out_dir(out, &case)?;
            for (_, inst) in all_instances(&case) {
                let sol = cases::reference_solution(inst)?
                    .ok_or_else(|| Error::Invalid("no oracle for navier-stokes cases".into()))?;
                let g = inst.mesh.grid;
                let f = GridField::from_channels(g.n_xi, g.n_eta, vec![("T".into(), sol)])?;
                let path = dir.join(format!("oracle{}.txt", file_label(inst)));
                fieldio::write(&f, &path)?;
                inst.mesh.write(&dir.join(format!("mesh{}.txt", file_label(inst))))?;
                println!("{}", path.display());
            }
        }
        Cmd::SampleSource { config, seed, out } => {
            let case = cases::build_case(&config)?;
            let basis = case.basis().ok_or_else(|| Error::Invalid("case has no random source field".into()))?;
            let f = gpfield::sample_source(basis, &gpfield::draw_omega(basis.k(), seed))?;
            let (mesh, _) = case.mesh(None)?;
            let g = mesh.grid;
            let dir = out_dir(out, &case)?;
            let path = dir.join(format!("source_seed{seed}.txt"));
            fieldio::write(&GridField::from_channels(g.n_xi, g.n_eta, vec![("f".into(), f)])?, &path)?;
            mesh.write(&dir.join("mesh.txt"))?;
            println!("{}  (energy fraction {:.4})", path.display(), basis.energy_fraction);
        }
    }
    Ok(())
}
