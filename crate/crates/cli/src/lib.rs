//! Command-line front end and HTTP/WebSocket render service for mockshade.

pub mod commands;
pub mod service;

/// Worker threads from `--threads`, else `MOCKSHADE_THREADS`, else rayon's default.
/// Must run before the first parallel render.
pub fn init_threads(threads: Option<usize>) -> Result<(), String> {
    let threads = match threads {
        Some(n) => Some(n),
        None => match std::env::var("MOCKSHADE_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| format!("MOCKSHADE_THREADS must be a count, got '{v}'"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}
