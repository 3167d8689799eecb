//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use remixd_core::par::Execution;
use remixd_core::repo::{JobState, RepoClient, RepoConfig};
use remixd_core::slicer::{slice_to_gcode, SliceConfig};
use remixd_core::stl::{load_stl, write_stl, StlFormat};

use crate::script::{RemixScript, Replay};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "remixd", version, about = "Search, remix and fabricate repository models headlessly")]
pub struct Cli {
    #[command(flatten)]
    pub repo: RepoArgs,
    /// Run data-parallel stages on one thread.
    #[arg(long, global = true, env = "REMIXD_SEQUENTIAL")]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RepoArgs {
    /// Live repository base URL; without it the fixture corpus is used.
    #[arg(long, global = true, env = "REMIXD_REPO_BASE_URL")]
    pub repo_base_url: Option<String>,
    #[arg(long, global = true, env = "REMIXD_REPO_SEARCH_PATH")]
    pub repo_search_path: Option<String>,
    #[arg(long, global = true, env = "REMIXD_FIXTURE_DIR")]
    pub fixture_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "REMIXD_PAGE_SIZE")]
    pub page_size: Option<usize>,
    /// Decimation quality factor for oversized downloads.
    #[arg(long, global = true, env = "REMIXD_QUALITY")]
    pub quality: Option<f64>,
    /// Downloads above this many triangles are simplified.
    #[arg(long, global = true, env = "REMIXD_AUTO_THRESHOLD")]
    pub auto_threshold: Option<usize>,
}

impl RepoArgs {
    pub fn config(&self) -> Result<RepoConfig, String> {
        RepoConfig::from_lookup(|key| match key {
            "REMIXD_REPO_BASE_URL" => self.repo_base_url.clone(),
            "REMIXD_REPO_SEARCH_PATH" => self.repo_search_path.clone(),
            "REMIXD_FIXTURE_DIR" => self.fixture_dir.as_ref().map(|p| p.display().to_string()),
            "REMIXD_PAGE_SIZE" => self.page_size.map(|v| v.to_string()),
            "REMIXD_QUALITY" => self.quality.map(|v| v.to_string()),
            "REMIXD_AUTO_THRESHOLD" => self.auto_threshold.map(|v| v.to_string()),
            _ => None,
        })
    }
}

#[derive(Debug, Args, Default)]
pub struct SliceArgs {
    #[arg(long, env = "REMIXD_LAYER_HEIGHT")]
    pub layer_height: Option<f64>,
    #[arg(long, env = "REMIXD_EXTRUSION_WIDTH")]
    pub extrusion_width: Option<f64>,
    #[arg(long, env = "REMIXD_FILAMENT_DIAMETER")]
    pub filament_diameter: Option<f64>,
    #[arg(long, env = "REMIXD_PERIMETERS")]
    pub perimeters: Option<u32>,
    /// Infill fraction in [0, 1].
    #[arg(long, env = "REMIXD_INFILL_DENSITY")]
    pub infill_density: Option<f64>,
    #[arg(long, env = "REMIXD_NO_SUPPORT")]
    pub no_support: bool,
    #[arg(long, env = "REMIXD_OVERHANG_DEG")]
    pub overhang_deg: Option<f64>,
    #[arg(long, env = "REMIXD_NOZZLE_TEMP")]
    pub nozzle_temp: Option<f64>,
    #[arg(long, env = "REMIXD_BED_TEMP")]
    pub bed_temp: Option<f64>,
}

impl SliceArgs {
    pub fn config(&self) -> Result<SliceConfig, String> {
        let mut c = SliceConfig::default();
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.layer_height, self.layer_height);
        set(&mut c.extrusion_width, self.extrusion_width);
        set(&mut c.filament_diameter, self.filament_diameter);
        set(&mut c.infill_density, self.infill_density);
        set(&mut c.overhang_threshold_deg, self.overhang_deg);
        set(&mut c.nozzle_temp, self.nozzle_temp);
        set(&mut c.bed_temp, self.bed_temp);
        if let Some(p) = self.perimeters {
            c.perimeter_count = p;
        }
        if self.no_support {
            c.support_enabled = false;
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List remix-allowed repository entries matching a query.
    Search {
        query: String,
        #[arg(long, default_value_t = 0)]
        page: usize,
        /// Print the search page as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Download and preprocess one entry, optionally saving the mesh.
    Fetch {
        entry_id: String,
        /// Write the preprocessed mesh as binary STL.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 600)]
        timeout_secs: u64,
    },
    /// Replay a remix script, writing exports and report.json.
    Replay {
        script: PathBuf,
        #[arg(long, env = "REMIXD_OUT_DIR")]
        out_dir: PathBuf,
        #[command(flatten)]
        slice: SliceArgs,
    },
    /// Slice an STL file to G-code.
    Slice {
        stl: PathBuf,
        /// Defaults to the input path with a .gcode extension.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        slice: SliceArgs,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "REMIXD_LISTEN", default_value = remixd_service::DEFAULT_LISTEN)]
        listen: String,
        /// Directory for periodic scene snapshots.
        #[arg(long, env = "REMIXD_SNAPSHOT_DIR")]
        snapshot_dir: Option<PathBuf>,
        #[arg(long, env = "REMIXD_SNAPSHOT_SECS", default_value_t = 30)]
        snapshot_secs: u64,
    },
}

/// Parses `argv` (program name first) and runs it. Returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Domain(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_DOMAIN
        }
    }
}

enum Failure {
    Usage(String),
    Domain(String),
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure::Domain(e.to_string())
}

fn client(cli: &Cli) -> Result<RepoClient, Failure> {
    let cfg = cli.repo.config().map_err(Failure::Usage)?;
    RepoClient::from_config(&cfg).map_err(domain)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let w = |r: std::io::Result<()>| r.map_err(domain);
    match &cli.command {
        Command::Search { query, page, json } => {
            let page = client(cli)?.search(query, *page).map_err(domain)?;
            if *json {
                w(writeln!(out, "{}", serde_json::to_string_pretty(&page).expect("serializable")))?;
            } else {
                w(writeln!(out, "{:<20} {:<36} {:<16} FILES", "ID", "TITLE", "LICENSE"))?;
                for e in &page.entries {
                    w(writeln!(out, "{:<20} {:<36} {:<16} {}", e.id, e.title, e.license, e.file_locators.len()))?;
                }
                w(writeln!(
                    out,
                    "page {} of query `{}`: {} shown, {} remix-allowed in total",
                    page.page,
                    page.query,
                    page.entries.len(),
                    page.total_available
                ))?;
            }
        }
        Command::Fetch {
            entry_id,
            out: path,
            timeout_secs,
        } => {
            let client = client(cli)?;
            let entry = client.entry(entry_id).map_err(domain)?;
            let job = client.enqueue_download(&entry).map_err(domain)?;
            let job = client.wait_for(job.id, Duration::from_secs(*timeout_secs)).map_err(domain)?;
            let states: Vec<String> = job.history.iter().map(|s| format!("{s:?}").to_lowercase()).collect();
            w(writeln!(out, "job {} `{}`: {}", job.id, entry.title, states.join(" -> ")))?;
            if job.state != JobState::Ready {
                return Err(Failure::Domain(job.failure.unwrap_or_else(|| "download timed out".into())));
            }
            if let Some(s) = &job.decimation {
                w(writeln!(out, "simplified {} -> {} triangles", s.input_triangles, s.output_triangles))?;
            }
            let mesh = job.mesh.expect("ready jobs carry a mesh");
            w(writeln!(
                out,
                "{} triangles, volume {:.3} mm3, watertight {}",
                mesh.triangle_count(),
                mesh.signed_volume(),
                mesh.is_watertight()
            ))?;
            if let Some(p) = path {
                let bytes = write_stl(&mesh, StlFormat::Binary).map_err(domain)?;
                std::fs::write(p, bytes).map_err(|e| Failure::Domain(format!("{}: {e}", p.display())))?;
                w(writeln!(out, "wrote {}", p.display()))?;
            }
        }
        Command::Replay { script, out_dir, slice } => {
            let slice = slice.config().map_err(Failure::Usage)?;
            let script = RemixScript::load(script).map_err(domain)?;
            let client = client(cli)?;
            let replay = Replay {
                client: &client,
                slice,
                exec,
                out_dir: out_dir.clone(),
            };
            let (_, report) = replay.run(&script).map_err(domain)?;
            for e in &report.exports {
                w(writeln!(
                    out,
                    "{}: {} triangles, volume {:.3} mm3, watertight {}{}",
                    e.stl,
                    e.triangles,
                    e.volume,
                    e.watertight,
                    e.gcode
                        .as_ref()
                        .map(|g| format!(", {} ({} layers)", g.file, g.layers))
                        .unwrap_or_default()
                ))?;
            }
            w(writeln!(
                out,
                "{} steps in {:.0} ms; report at {}",
                report.steps.len(),
                report.total_millis,
                out_dir.join("report.json").display()
            ))?;
        }
        Command::Slice { stl, out: path, slice } => {
            let cfg = slice.config().map_err(Failure::Usage)?;
            let bytes = std::fs::read(stl).map_err(|e| Failure::Domain(format!("{}: {e}", stl.display())))?;
            let loaded = load_stl(&bytes).map_err(domain)?;
            let (mesh, _) = remixd_core::repair::repair_mesh(&loaded.mesh);
            let result = slice_to_gcode(exec, &mesh, &cfg).map_err(domain)?;
            let dest = path.clone().unwrap_or_else(|| stl.with_extension("gcode"));
            write_file(&dest, result.program.to_text().as_bytes())?;
            for warning in result.warnings.iter().take(10) {
                log::warn!("{warning}");
            }
            w(writeln!(
                out,
                "{} layers, {:.2} mm filament ({:.1} mm3), wrote {}",
                result.program.layer_count,
                result.program.total_extruded_mm,
                result.program.filament_volume_mm3,
                dest.display()
            ))?;
        }
        Command::Serve {
            listen,
            snapshot_dir,
            snapshot_secs,
        } => {
            let repo = cli.repo.config().map_err(Failure::Usage)?;
            let config = remixd_service::ServiceConfig {
                listen: listen.clone(),
                repo,
                snapshot_dir: snapshot_dir.clone(),
                snapshot_interval: Duration::from_secs((*snapshot_secs).max(1)),
            };
            let rt = tokio::runtime::Runtime::new().map_err(domain)?;
            rt.block_on(remixd_service::serve(config)).map_err(domain)?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}
