use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mockshade::demo::{block, demo_scene};
use mockshade::io::{decode_pfm, save_color_png, PngDepth};
use mockshade::scene::{serialize_scene, Layer, Light, LightKey, LightKind, LightPath, Material, MockScene, ShapeChannel};
use mockshade::{Field2D, Rgba, Vec2, Vec3};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mockshade"));
    c.env_remove("MOCKSHADE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scene(dir: &Path, name: &str, scene: &MockScene) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serialize_scene(scene)).unwrap();
    p
}

fn png_dims(bytes: &[u8]) -> (u32, u32) {
    assert_eq!(&bytes[1..4], b"PNG");
    let w = u32::from_be_bytes(bytes[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
    (w, h)
}

const MINIMAL: &str = r#"{
    "resolution": [40, 24],
    "layers": [{"id": "ground", "shape": {"kind": "height_field", "height": 0.0}, "textures": [0.0, [1.0, 0.5, 0.2]]}],
    "lights": [{"kind": "directional", "azimuth": 0.3, "elevation": 0.9}]
}"#;

#[test]
fn render_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("min.json");
    std::fs::write(&scene, MINIMAL).unwrap();
    let out = dir.path().join("frame");
    let o = run(&["render", "--scene", s(&scene), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let png = std::fs::read(dir.path().join("frame_final.png")).unwrap();
    assert_eq!(png_dims(&png), (40, 24));
    let pfm = decode_pfm(&std::fs::read(dir.path().join("frame_w.pfm")).unwrap()).unwrap();
    assert_eq!(pfm.into_scalar().dims(), (40, 24));
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("frame_w.json")).unwrap()).unwrap();
    assert_eq!(sidecar["width"], 40);
}

#[test]
fn w_only_skips_final_image() {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("min.json");
    std::fs::write(&scene, MINIMAL).unwrap();
    let out = dir.path().join("w");
    assert!(run(&["render", "--scene", s(&scene), "--out", s(&out), "--w-only"]).status.success());
    assert!(dir.path().join("w_w.pfm").exists());
    assert!(!dir.path().join("w_final.png").exists());
}

#[test]
fn renders_are_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(dir.path(), "demo.json", &demo_scene(48));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert!(run(&["render", "--scene", s(&scene), "--out", s(&a), "--threads", "1"]).status.success());
    assert!(bin()
        .args(["render", "--scene", s(&scene), "--out", s(&b)])
        .env("MOCKSHADE_THREADS", "3")
        .status()
        .unwrap()
        .success());
    assert!(run(&["render", "--scene", s(&scene), "--out", s(&c)]).status.success());
    for suffix in ["_final.png", "_w.pfm", "_w.json"] {
        let read = |p: &Path| std::fs::read(format!("{}{suffix}", p.display())).unwrap();
        assert_eq!(read(&a), read(&b), "{suffix}");
        assert_eq!(read(&a), read(&c), "{suffix}");
    }
}

#[test]
fn invalid_scenes_exit_with_one_and_list_every_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"layers": [{"id": "a", "textures": [0.0]}, {"id": "b", "shape": {"kind": "normal_field"}, "textures": [0.0, 1.0]}],
            "lights": [{"kind": "directional", "direction": [0, 0, -1]}]}"#,
    )
    .unwrap();
    let o = run(&["render", "--scene", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("layers[0]") && err.contains("layers[1]"), "{err}");

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"layers": [], "lights": []}"#).unwrap();
    assert_eq!(run(&["analyze", "--scene", s(&empty)]).status.code(), Some(1));
    assert_eq!(run(&["render", "--scene", s(&empty), "--out", "x"]).status.code(), Some(1));
}

#[test]
fn io_failures_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["render", "--scene", s(&missing), "--out", "x"]).status.code(), Some(2));
    let scene = dir.path().join("min.json");
    std::fs::write(&scene, MINIMAL).unwrap();
    let out = dir.path().join("no/such/dir/frame");
    assert_eq!(run(&["render", "--scene", s(&scene), "--out", s(&out)]).status.code(), Some(2));
}

fn layer_from_normals(id: &str, normals: Field2D<Vec3>) -> Layer {
    let (n, m) = normals.dims();
    Layer {
        id: id.into(),
        c: 0.0,
        z_deform: None,
        shape: ShapeChannel::normal_field(normals, Field2D::new(n, m, 1.0)),
        control_textures: vec![Field2D::new(n, m, Rgba::BLACK), Field2D::new(n, m, Rgba::WHITE)],
        material: Material::simple(n, m),
    }
}

fn slopes_to_normals(p: Field2D<Vec2>) -> Field2D<Vec3> {
    p.map(|s| Vec3::new(-s.x, -s.y, 1.0).normalize())
}

#[test]
fn analyze_reports_curl_per_layer() {
    let n = 64;
    let mut scene = MockScene::new(n, n, vec![Light::directional(Vec3::new(0.0, 0.0, -1.0), Rgba::WHITE)]);
    // Gradient of h = 0.05 sin(2πu) sin(2πv).
    let k = std::f64::consts::TAU;
    scene.layers.push(layer_from_normals(
        "smooth",
        slopes_to_normals(Field2D::from_uv_fn(n, n, |u, v| {
            Vec2::new(0.05 * k * (k * u).cos() * (k * v).sin(), 0.05 * k * (k * u).sin() * (k * v).cos())
        })),
    ));
    scene.layers.push(layer_from_normals(
        "seamed",
        slopes_to_normals(Field2D::from_uv_fn(n, n, |u, _| Vec2::new(0.0, if u < 0.5 { 0.3 } else { -0.3 }))),
    ));
    let dir = TempDir::new().unwrap();
    let path = write_scene(dir.path(), "a.json", &scene);
    let o = run(&["analyze", "--scene", s(&path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let smooth = report["smooth"]["max_curl"].as_f64().unwrap();
    let seamed = report["seamed"]["max_curl"].as_f64().unwrap();
    assert!(smooth < 0.05, "{smooth}");
    assert!(seamed > 10.0, "{seamed}");
    assert!(report["seamed"]["flagged_fraction"].as_f64().unwrap() > 0.0);
    assert!(report["smooth"]["residual_norm"].as_f64().unwrap() < 1e-3);
}

fn sweep_scene(n: usize) -> MockScene {
    let mut scene = demo_scene(n);
    scene.layers.truncate(1);
    let mut b = block("box", n, (0.45, 0.55), (0.3, 0.7), 0.15);
    b.c = 0.0;
    scene.layers.push(b);
    scene.lights = vec![Light::from_elevation(0.0, 0.6, Rgba::WHITE)];
    scene.background = None;
    scene
}

fn direction(light: Light) -> Vec3 {
    match light.kind {
        LightKind::Directional { direction } => direction,
        _ => unreachable!("built as a directional light"),
    }
}

/// Mean `u` of dark pixels outside the box footprint.
fn shadow_centroid(w: &Field2D<f64>) -> f64 {
    let (n, _) = w.dims();
    let mut sum = 0.0;
    let mut count = 0.0;
    for j in 0..n {
        for i in 0..n {
            let (u, v) = w.pixel_center(i, j);
            let on_box = (0.45..=0.55).contains(&u) && (0.3..=0.7).contains(&v);
            if !on_box && w.get(i, j) < 0.05 {
                sum += u;
                count += 1.0;
            }
        }
    }
    sum / count
}

#[test]
fn animation_frames_follow_the_light_path() {
    let n = 64;
    let dir = TempDir::new().unwrap();
    let scene_path = write_scene(dir.path(), "s.json", &sweep_scene(n));
    // Static lights: every frame equals a single render at its time.
    let out = dir.path().join("still");
    assert!(run(&["animate", "--scene", s(&scene_path), "--frames", "3", "--fps", "2", "--out", s(&out)])
        .status
        .success());
    let one = dir.path().join("one");
    assert!(run(&["render", "--scene", s(&scene_path), "--out", s(&one)]).status.success());
    let f0 = std::fs::read(dir.path().join("still_0000_final.png")).unwrap();
    assert_eq!(f0, std::fs::read(dir.path().join("one_final.png")).unwrap());
    for i in 1..3 {
        assert_eq!(f0, std::fs::read(dir.path().join(format!("still_{i:04}_final.png"))).unwrap());
    }

    // The sun rises from 0.4 to 1.2 rad; the shadow right of the box shrinks.
    let sweep = LightPath {
        keys: [(0.0, 0.4), (1.0, 1.2)]
            .iter()
            .map(|&(t, elevation)| LightKey {
                t,
                light: 0,
                position: None,
                direction: Some(direction(Light::from_elevation(0.0, elevation, Rgba::WHITE))),
                intensity: None,
            })
            .collect(),
    };
    let lp = dir.path().join("path.json");
    std::fs::write(&lp, serde_json::to_string(&sweep).unwrap()).unwrap();
    let out = dir.path().join("sweep");
    let o = run(&[
        "animate", "--scene", s(&scene_path), "--light-path", s(&lp), "--frames", "5", "--fps", "4", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let centroids: Vec<f64> = (0..5)
        .map(|i| {
            let bytes = std::fs::read(dir.path().join(format!("sweep_{i:04}_w.pfm"))).unwrap();
            shadow_centroid(&decode_pfm(&bytes).unwrap().into_scalar())
        })
        .collect();
    assert!(centroids.windows(2).all(|w| w[1] < w[0]), "{centroids:?}");
    assert!(centroids[0] > 0.65 && centroids[4] < 0.62, "{centroids:?}");
}

#[test]
fn composite_bake_and_view_write_images() {
    let n = 32;
    let dir = TempDir::new().unwrap();
    let mut scene = sweep_scene(n);
    scene.layers[1].id = "virtual_box".into();
    let scene_path = write_scene(dir.path(), "s.json", &scene);
    let out = dir.path().join("comp.png");
    let o = run(&["composite", "--scene", s(&scene_path), "--virtual", "virtual_box", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(png_dims(&std::fs::read(&out).unwrap()), (32, 32));
    let o = run(&["composite", "--scene", s(&scene_path), "--virtual", "nope", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));

    let src = Field2D::from_fn(24, 24, |i, j| if (i / 4 + j / 4) % 2 == 0 { Rgba::WHITE } else { Rgba::BLACK });
    save_color_png(&src, &dir.path().join("src.png"), PngDepth::Eight).unwrap();
    let spec = r#"{
        "source": "src.png",
        "vantage": {"kind": "vantage", "eye": [0.5, -0.6, 1.5], "look_at": [0.5, 0.5, 0.0], "fov_y": 0.6},
        "receiver": {"kind": "plane", "normal": [0, 0, 1], "offset": 0}
    }"#;
    let spec_path = dir.path().join("bake.json");
    std::fs::write(&spec_path, spec).unwrap();
    let prefix = dir.path().join("b");
    let o = run(&["bake", "--scene", s(&spec_path), "--out", s(&prefix)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("b_texture.png").exists());
    assert!(dir.path().join("b_bake.json").exists());
    let view = dir.path().join("view.png");
    let o = run(&["view", "--scene", s(&spec_path), "--size", "48x32", "--out", s(&view)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(png_dims(&std::fs::read(&view).unwrap()), (48, 32));
}
