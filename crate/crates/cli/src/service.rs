//! The render service: one scene owned by the server, edited by PATCH and
//! rendered on demand or pushed to `/live` subscribers after each edit.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use mockshade::illumination::{compute_w, IlluminationImage};
use mockshade::io::encode_pfm_gray;
use mockshade::render::shade_scene;
use mockshade::scene::{apply_patch, serialize_scene, MockScene, ScenePatch};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::watch;

use crate::commands::encode_final_png;

pub const REVISION_HEADER: &str = "x-revision";

struct Session {
    scene: Arc<MockScene>,
    revision: u64,
    /// Illumination of the current revision at one time value.
    last_w: Option<(f64, Arc<IlluminationImage>)>,
}

pub struct ServiceState {
    session: Mutex<Session>,
    base_dir: PathBuf,
    changes: watch::Sender<u64>,
}

pub type AppState = Arc<ServiceState>;

impl ServiceState {
    pub fn new(scene: MockScene, base_dir: PathBuf) -> AppState {
        let (changes, _) = watch::channel(0);
        Arc::new(ServiceState {
            session: Mutex::new(Session {
                scene: Arc::new(scene),
                revision: 0,
                last_w: None,
            }),
            base_dir,
            changes,
        })
    }

    fn snapshot(&self) -> (Arc<MockScene>, u64) {
        let s = self.session.lock().expect("session lock");
        (s.scene.clone(), s.revision)
    }

    /// Illumination for `(revision, t)`, from the cache when it matches.
    fn illumination(&self, scene: &MockScene, revision: u64, t: f64) -> Arc<IlluminationImage> {
        {
            let s = self.session.lock().expect("session lock");
            if s.revision == revision {
                if let Some((ct, w)) = &s.last_w {
                    if ct.to_bits() == t.to_bits() {
                        return w.clone();
                    }
                }
            }
        }
        let w = Arc::new(compute_w(scene, t));
        let mut s = self.session.lock().expect("session lock");
        if s.revision == revision {
            s.last_w = Some((t, w.clone()));
        }
        w
    }

    /// Final PNG of the given snapshot.
    pub fn render_png(&self, scene: &MockScene, revision: u64, t: f64) -> Result<Vec<u8>, String> {
        let w = self.illumination(scene, revision, t);
        let image = shade_scene(scene, &w).map_err(|e| e.to_string())?;
        Ok(encode_final_png(&image))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scene", get(get_scene).patch(patch_scene))
        .route("/render", post(post_render))
        .route("/w", get(get_w))
        .route("/live", get(live))
        .with_state(state)
}

fn revision_header(revision: u64) -> [(header::HeaderName, HeaderValue); 1] {
    [(header::HeaderName::from_static(REVISION_HEADER), HeaderValue::from(revision))]
}

fn error_response(status: StatusCode, revision: u64, errors: Vec<String>) -> Response {
    (status, revision_header(revision), Json(json!({ "revision": revision, "errors": errors }))).into_response()
}

async fn get_scene(State(state): State<AppState>) -> Response {
    let (scene, revision) = state.snapshot();
    let body = format!("{{\"revision\":{revision},\"scene\":{}}}", serialize_scene(&scene));
    (
        revision_header(revision),
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response()
}

async fn patch_scene(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let patch: ScenePatch = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, state.snapshot().1, vec![e.to_string()]),
    };
    let expected = patch.revision.or_else(|| {
        headers
            .get("if-match")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim_matches('"').parse().ok())
    });
    // Edits are serialized by holding the session lock across validation.
    let mut s = state.session.lock().expect("session lock");
    if let Some(rev) = expected {
        if rev != s.revision {
            let msg = format!("stale revision {rev}, current is {}", s.revision);
            return error_response(StatusCode::CONFLICT, s.revision, vec![msg]);
        }
    }
    match apply_patch(&s.scene, &patch, &state.base_dir) {
        Ok(next) => {
            s.scene = Arc::new(next);
            s.revision += 1;
            s.last_w = None;
            let revision = s.revision;
            drop(s);
            state.changes.send_replace(revision);
            (revision_header(revision), Json(json!({ "revision": revision }))).into_response()
        }
        Err(errs) => {
            let errors = errs.0.iter().map(|e| e.to_string()).collect();
            error_response(StatusCode::BAD_REQUEST, s.revision, errors)
        }
    }
}

#[derive(Debug, Deserialize)]
struct TimeQuery {
    #[serde(default)]
    t: f64,
}

async fn post_render(State(state): State<AppState>, Query(q): Query<TimeQuery>) -> Response {
    let (scene, revision) = state.snapshot();
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || st.render_png(&scene, revision, q.t))
        .await
        .expect("render task");
    match result {
        Ok(png) => (
            revision_header(revision),
            [(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))],
            png,
        )
            .into_response(),
        Err(e) => error_response(StatusCode::UNPROCESSABLE_ENTITY, revision, vec![e]),
    }
}

async fn get_w(State(state): State<AppState>, Query(q): Query<TimeQuery>) -> Response {
    let (scene, revision) = state.snapshot();
    let st = state.clone();
    let pfm = tokio::task::spawn_blocking(move || encode_pfm_gray(&st.illumination(&scene, revision, q.t).combined_w))
        .await
        .expect("render task");
    (
        revision_header(revision),
        [(header::CONTENT_TYPE, HeaderValue::from_static("image/x-portable-floatmap"))],
        pfm,
    )
        .into_response()
}

/// A frame pushed over `/live`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct LiveFrame {
    pub revision: u64,
    pub t: f64,
    pub format: String,
    /// Base64 PNG.
    pub frame: String,
}

/// Client message on `/live`: move the session to time `t`.
#[derive(Debug, Serialize, Deserialize)]
pub struct LiveRequest {
    pub t: f64,
}

async fn live(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| live_session(state, socket))
}

/// Pushes a frame on connect, after every accepted edit and after every time
/// change. Renders one frame at a time; edits that land while a frame renders
/// collapse into a single follow-up frame.
async fn live_session(state: AppState, mut socket: WebSocket) {
    let mut changes = state.changes.subscribe();
    let mut t = 0.0;
    let mut dirty = true;
    loop {
        if dirty {
            dirty = false;
            changes.mark_unchanged();
            let (scene, revision) = state.snapshot();
            let st = state.clone();
            let frame = tokio::task::spawn_blocking(move || st.render_png(&scene, revision, t))
                .await
                .expect("render task");
            let msg = match frame {
                Ok(png) => serde_json::to_string(&LiveFrame {
                    revision,
                    t,
                    format: "png".into(),
                    frame: base64::engine::general_purpose::STANDARD.encode(png),
                }),
                Err(e) => serde_json::to_string(&json!({ "revision": revision, "t": t, "error": e })),
            }
            .expect("frame serializes");
            if socket.send(Message::Text(msg.into())).await.is_err() {
                return;
            }
        }
        tokio::select! {
            changed = changes.changed() => {
                if changed.is_err() {
                    return;
                }
                dirty = true;
            }
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    if let Ok(req) = serde_json::from_str::<LiveRequest>(&text) {
                        t = req.t;
                        dirty = true;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("mockshade: serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
