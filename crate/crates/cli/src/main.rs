use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mockshade_cli::commands::{self, CliError};
use mockshade_cli::service::{serve, ServiceState};

#[derive(Parser)]
#[command(name = "mockshade", version, about = "Mock-3D illumination and barycentric shading")]
struct Cli {
    /// Worker threads; falls back to MOCKSHADE_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one frame: `{out}_w.pfm`, `{out}_final.png` and `{out}_w.json`.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
        /// Skip stage two; write only the illumination image and sidecar.
        #[arg(long)]
        w_only: bool,
    },
    /// Render frames at `t = i / fps` under `{out}_{i:04}`.
    Animate {
        #[arg(long)]
        scene: PathBuf,
        /// Light path JSON; overrides the scene's own path.
        #[arg(long)]
        light_path: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        frames: usize,
        #[arg(long, default_value_t = 24.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        w_only: bool,
    },
    /// Print per-layer curl and integrability residuals as JSON.
    Analyze {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Composite the impact of virtual layers over a background.
    Composite {
        #[arg(long)]
        scene: PathBuf,
        /// Layer id of a virtual object; repeatable.
        #[arg(long = "virtual", required = true)]
        virtual_ids: Vec<String>,
        /// Background image; defaults to a render of the proxy layers.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, default_value_t = 0.8)]
        shadow_strength: f64,
        /// `r,g,b` multiplier in [0,1].
        #[arg(long, value_delimiter = ',', default_value = "0,0,0")]
        shadow_tint: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bake an anamorphic texture: `{out}_texture.png` and `{out}_bake.json`.
    Bake {
        /// Bake spec JSON.
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// View a bake from its vantage or from another camera.
    View {
        /// Bake spec JSON.
        #[arg(long)]
        scene: PathBuf,
        /// Camera JSON; defaults to the vantage.
        #[arg(long)]
        viewer: Option<PathBuf>,
        /// `WIDTHxHEIGHT`.
        #[arg(long, value_delimiter = 'x')]
        size: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the scene over HTTP and WebSocket.
    Serve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Render { scene, t, out, w_only } => {
            commands::cmd_render(&scene, t, &out, w_only)?;
        }
        Command::Animate {
            scene,
            light_path,
            frames,
            fps,
            out,
            w_only,
        } => {
            commands::cmd_animate(&scene, light_path.as_deref(), frames, fps, &out, w_only)?;
        }
        Command::Analyze { scene } => println!("{}", commands::cmd_analyze(&scene)?),
        Command::Composite {
            scene,
            virtual_ids,
            background,
            t,
            shadow_strength,
            shadow_tint,
            out,
        } => {
            let tint: [f64; 3] = shadow_tint
                .try_into()
                .map_err(|_| CliError::Invalid("--shadow-tint takes three values r,g,b".into()))?;
            commands::cmd_composite(&scene, &virtual_ids, background.as_deref(), t, shadow_strength, tint, &out)?;
        }
        Command::Bake { scene, out } => {
            let report = commands::cmd_bake(&scene, &out)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::View {
            scene,
            viewer,
            size,
            out,
        } => {
            let size = match size.as_deref() {
                None => None,
                Some(&[w, h]) => Some((w, h)),
                Some(_) => return Err(CliError::Invalid("--size takes WIDTHxHEIGHT".into())),
            };
            commands::cmd_view(&scene, viewer.as_deref(), size, &out)?;
        }
        Command::Serve { scene, port, host } => {
            let parsed = commands::load_scene(&scene)?;
            let base = scene.parent().map(PathBuf::from).unwrap_or_default();
            let state = ServiceState::new(parsed, base);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            rt.block_on(serve(state, SocketAddr::new(host, port)))
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = mockshade_cli::init_threads(cli.threads) {
        eprintln!("mockshade: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mockshade: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
