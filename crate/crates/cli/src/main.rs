use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edgepc::config::Settings;
use edgepc::evaluation::{histograms_csv, measure_cloud, noise_sweep_report, report_csv, STATS_HEADER};
use edgepc::gradcheck::{run_gradcheck, NETWORK_TOLERANCE};
use edgepc::io::checkpoint::read_checkpoint;
use edgepc::io::dataset::{read_dataset, write_dataset};
use edgepc::io::edges::{read_edges, write_edges};
use edgepc::io::obj::{read_obj, write_obj};
use edgepc::io::ply::{read_ply, write_ply};
use edgepc::mesh::{normalize_mesh, primitives};
use edgepc::patching::training_patches;
use edgepc::pipeline::{consolidate, train, CsvSink};
use edgepc::refine::refine;
use edgepc::rng::child_rng;
use edgepc::scanner::{virtual_scan, ScanConfig};
use edgepc::{Error, Result, TriMesh};

const USAGE_EXIT: u8 = 1;
const DATA_EXIT: u8 = 2;

/// Edge-aware point cloud consolidation: virtual scanning, patch datasets,
/// training, inference, refinement and evaluation.
///
/// Meshes are normalized to the [-1, 1] cube on read; clouds and reports
/// are in that frame.
#[derive(Parser, Debug)]
#[command(name = "edgepc", version)]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value file overriding defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a built-in primitive (cube, wedge, ...) as OBJ plus edges.
    Primitive {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out_mesh: PathBuf,
        #[arg(long)]
        out_edges: PathBuf,
    },
    /// Virtually scan a mesh into a PLY cloud.
    Scan {
        #[arg(long)]
        mesh: PathBuf,
        /// Accepted for symmetry with `patches`; scanning ignores edges.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Depth quantization levels.
        #[arg(long)]
        nq: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract normalized training patches with ground truth. Repeat
    /// --mesh/--edges (and optionally --cloud) once per model.
    Patches {
        #[arg(long, required = true)]
        mesh: Vec<PathBuf>,
        #[arg(long, required = true)]
        edges: Vec<PathBuf>,
        /// Scans matching each mesh; scanned on the fly when omitted.
        #[arg(long)]
        cloud: Vec<PathBuf>,
        /// Patch centers per model.
        #[arg(long)]
        centroids: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a patch dataset, checkpointing every epoch.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path, rewritten after every epoch.
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u64>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a trained network patch-wise over a cloud.
    Consolidate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Line/plane projection and gap filling of a consolidated cloud.
    Refine {
        #[arg(long)]
        cloud: PathBuf,
        /// Cloud used to fill gaps; defaults to --cloud.
        #[arg(long)]
        original: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error statistics of a cloud, or a noise sweep with --model.
    Eval {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, required_unless_present = "model", conflicts_with = "model")]
        cloud: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Histogram CSV.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Finite-difference check of the losses and the network.
    Gradcheck,
}

fn load_mesh(mesh: &Path, edges: Option<&Path>) -> Result<TriMesh> {
    let mut m = read_obj(mesh)?;
    if let Some(e) = edges {
        m.edges = read_edges(e)?;
    }
    Ok(normalize_mesh(&m)?.0)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// `Ok(false)` means the command ran but its check failed.
fn run(cli: Cli) -> Result<bool> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.set_seed(seed);
    }
    match cli.command {
        Command::Primitive { name, out_mesh, out_edges } => {
            let mesh = primitives::by_name(&name).ok_or_else(|| Error::Config(format!("unknown primitive {name:?}")))?;
            write_obj(&out_mesh, &mesh)?;
            write_edges(&out_edges, &mesh.edges)?;
        }
        Command::Scan { mesh, edges, nq, out } => {
            let mesh = load_mesh(&mesh, edges.as_deref())?;
            if let Some(q) = nq {
                s.scan.n_q = q;
            }
            let cloud = virtual_scan(&mesh, &s.scan)?;
            log::info!("scanned {} points", cloud.len());
            write_ply(&out, &cloud)?;
        }
        Command::Patches {
            mesh,
            edges,
            cloud,
            centroids,
            out,
        } => {
            if mesh.len() != edges.len() || !(cloud.is_empty() || cloud.len() == mesh.len()) {
                return Err(Error::Config("need one --edges (and --cloud, if any) per --mesh".into()));
            }
            if let Some(c) = centroids {
                s.patch.centroids_per_cloud = c;
            }
            let mut all = Vec::new();
            for (id, (m, e)) in mesh.iter().zip(&edges).enumerate() {
                let model = load_mesh(m, Some(e))?;
                let points = match cloud.get(id) {
                    Some(c) => read_ply(c)?.points,
                    None => {
                        let scan = ScanConfig {
                            seed: edgepc::rng::child_seed(s.scan.seed, id as u64),
                            ..s.scan.clone()
                        };
                        virtual_scan(&model, &scan)?.points
                    }
                };
                let mut rng = child_rng(s.train.seed, id as u64);
                let patches = training_patches(&points, &model, &s.patch, id as u32, &mut rng)?;
                log::info!("{}: {} patches", m.display(), patches.len());
                all.extend(patches);
            }
            if all.is_empty() {
                return Err(Error::NoPatches);
            }
            write_dataset(&out, s.patch.sample_size, &all)?;
        }
        Command::Train {
            data,
            out,
            log,
            epochs,
            resume,
        } => {
            let (n_hat, patches) = read_dataset(&data)?;
            s.train.network.n_hat = n_hat;
            if let Some(e) = epochs {
                s.train.epochs = e;
            }
            let resume = resume
                .map(|p| read_checkpoint(&p, Some(&s.train.network)))
                .transpose()?;
            let sink_out: Box<dyn Write> = match &log {
                Some(p) => {
                    let f = OpenOptions::new()
                        .create(true)
                        .append(resume.is_some())
                        .write(true)
                        .truncate(resume.is_none())
                        .open(p)?;
                    Box::new(BufWriter::new(f))
                }
                None => Box::new(std::io::sink()),
            };
            let fresh_log = match &log {
                Some(p) => std::fs::metadata(p)?.len() == 0,
                None => false,
            };
            let mut sink = CsvSink::new(sink_out, Some(out.clone()), fresh_log)?;
            let outcome = train(&patches, &s.train, resume, &mut sink)?;
            edgepc::io::checkpoint::write_checkpoint(&out, &outcome.checkpoint)?;
            if let Some(last) = outcome.log.last() {
                eprintln!("epoch {} step {} joint loss {:.6}", last.epoch, last.step, last.loss.joint);
            }
        }
        Command::Consolidate { model, cloud, out } => {
            let ck = read_checkpoint(&model, None)?;
            let input = read_ply(&cloud)?;
            let result = consolidate(&input.points, &ck.params, &s.infer)?;
            eprintln!(
                "{} patches ({} skipped), {} points",
                result.patches,
                result.skipped,
                result.cloud.len()
            );
            write_ply(&out, &result.cloud)?;
        }
        Command::Refine { cloud, original, out } => {
            let input = read_ply(&cloud)?;
            let original = match &original {
                Some(p) => read_ply(p)?.points,
                None => input.points.clone(),
            };
            let result = refine(&input, &original, &s.refine)?;
            eprintln!(
                "displacement per round {:?}, {} segments, {} points added",
                result.displacement,
                result.segments.len(),
                result.added
            );
            write_ply(&out, &result.cloud)?;
        }
        Command::Eval {
            mesh,
            edges,
            cloud,
            model,
            out,
            hist,
        } => {
            let mesh = load_mesh(&mesh, Some(&edges))?;
            let (bins, range) = (s.eval.bins, s.eval.range);
            if let Some(model) = model {
                let ck = read_checkpoint(&model, None)?;
                let rows = noise_sweep_report(&mesh, &ck.params, &s.scan, &s.infer, &s.eval.n_q, bins, range)?;
                write_text(out.as_deref(), &report_csv(&rows))?;
                if let Some(h) = hist {
                    std::fs::write(h, histograms_csv(&rows))?;
                }
            } else if let Some(cloud) = cloud {
                let stats = measure_cloud(&read_ply(&cloud)?.points, &mesh, bins, range)?;
                write_text(out.as_deref(), &format!("{STATS_HEADER}\n{}\n", stats.csv_row()))?;
                if let Some(h) = hist {
                    let mut f = BufWriter::new(File::create(h)?);
                    writeln!(f, "metric,bin_lo,bin_hi,count")?;
                    for (metric, hg) in [("surface", &stats.surface_hist), ("edge", &stats.edge_hist)] {
                        for line in hg.to_csv().lines().skip(1) {
                            writeln!(f, "{metric},{line}")?;
                        }
                    }
                    f.flush()?;
                }
            }
        }
        Command::Gradcheck => {
            let seed = cli.seed.unwrap_or(s.train.seed);
            let r = run_gradcheck(seed, &s.train.loss)?;
            let l = &r.losses;
            println!("fixtures {}", l.fixtures);
            println!("surface {:.3e}", l.surface);
            println!("edge {:.3e}", l.edge);
            println!("repulsion {:.3e}", l.repulsion);
            println!("regression {:.3e}", l.regression);
            println!("joint {:.3e}", l.joint);
            println!("network {:.3e} ({} parameters)", r.network.max_error, r.network.samples.len());
            println!("max relative error {:.3e}", r.max_error());
            return Ok(r.max_error() < NETWORK_TOLERANCE);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(DATA_EXIT),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(DATA_EXIT)
        }
    }
}
