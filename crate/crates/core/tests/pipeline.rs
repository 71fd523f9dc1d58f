use mockshade::demo::{corpus, demo_scene};
use mockshade::illumination::{compute_w, compute_w_with, Effects};
use mockshade::render::render;
use mockshade::scene::{parse_scene, serialize_scene};
use mockshade::{Field2D, Rgba};
use std::path::Path;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn renders_match_across_thread_counts() {
    for (name, scene) in corpus(48) {
        let one = in_pool(1, || render(&scene, 0.3).unwrap());
        let three = in_pool(3, || render(&scene, 0.3).unwrap());
        assert_eq!(one, three, "{name}");
    }
}

#[test]
fn textures_never_reach_illumination() {
    for (name, scene) in corpus(40) {
        let before = compute_w(&scene, 0.0);
        let mut edited = scene.clone();
        for layer in &mut edited.layers {
            for (k, t) in layer.control_textures.iter_mut().enumerate() {
                *t = Field2D::from_fn(t.width(), t.height(), |i, j| Rgba::gray(((i * 7 + j * 3 + k) % 11) as f64 / 10.0));
            }
        }
        assert_eq!(before, compute_w(&edited, 0.0), "{name}");
    }
}

#[test]
fn scene_documents_round_trip() {
    for (name, scene) in corpus(16) {
        let text = serialize_scene(&scene);
        let back = parse_scene(&text, Path::new(".")).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(back, scene, "{name}");
        assert_eq!(serialize_scene(&back), text, "{name}");
    }
}

#[test]
fn lights_add_per_plane() {
    let scene = demo_scene(40);
    let fx = Effects {
        bleed: false,
        mirrors: false,
        caustics: false,
        ..Effects::default()
    };
    let both = compute_w_with(&scene, 0.0, fx);
    let mut parts = Vec::new();
    for k in 0..scene.lights.len() {
        let mut s = scene.clone();
        // Zero the others rather than removing them so the group layout stays.
        for (q, l) in s.lights.iter_mut().enumerate() {
            if q != k {
                l.intensity = Rgba::ZERO;
            }
        }
        parts.push(compute_w_with(&s, 0.0, fx));
    }
    for g in 0..both.groups() {
        for (p, v) in both.diffuse[g].values().iter().enumerate() {
            let sum = parts.iter().fold(Rgba::ZERO, |a, w| a + w.diffuse[g].values()[p]);
            assert!((*v - sum).max_abs() < 1e-6);
        }
        for (p, v) in both.specular[g].values().iter().enumerate() {
            let sum = parts.iter().fold(Rgba::ZERO, |a, w| a + w.specular[g].values()[p]);
            assert!((*v - sum).max_abs() < 1e-6);
        }
    }
}

#[test]
fn demo_render_is_finite_and_sized() {
    let r = render(&demo_scene(64), 0.0).unwrap();
    assert_eq!(r.image.dims(), (64, 64));
    assert!(r.image.values().iter().all(Rgba::is_finite));
    assert!(r.illumination.combined_w.values().iter().all(|w| (0.0..=1.0).contains(w)));
}
