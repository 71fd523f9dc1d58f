//! Library outputs checked against independent closed-form or brute-force references.

use std::f64::consts::{FRAC_PI_4, PI};

use mockshade::baryshade::WeightBasis;
use mockshade::illumination::{
    cast_shadow, flatland_render, mirror_reflect, refract_offset, FlatLight, FlatOccluder, FlatScene,
};
use mockshade::scene::{
    curl_residual, discrete_circulation, normals_to_slopes, Layer, Light, Material, MockScene, ShapeChannel,
    DEFAULT_EPS_Z,
};
use mockshade::{Field2D, Rgba, Vec2, Vec3};
use proptest::prelude::*;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn bezier_weights_match_bernstein_formula() {
    for degree in 1..=8 {
        let basis = WeightBasis::Bezier { degree };
        for s in 0..=50 {
            let w = s as f64 / 50.0;
            let got = basis.eval(w);
            for (k, g) in got.iter().enumerate() {
                let expect = binomial(degree, k) * w.powi(k as i32) * (1.0 - w).powi((degree - k) as i32);
                assert!((g - expect).abs() < 1e-12, "degree {degree} k {k} w {w}");
            }
        }
    }
}

fn flat_layer(id: &str, n: usize, height: Field2D<f64>, matte: Field2D<f64>) -> Layer {
    Layer {
        id: id.into(),
        c: 0.0,
        z_deform: None,
        shape: ShapeChannel::height_field(height, matte),
        control_textures: vec![Field2D::new(n, n, Rgba::BLACK), Field2D::new(n, n, Rgba::WHITE)],
        material: Material::simple(n, n),
    }
}

/// Refracted direction by rotating within the plane of incidence, using the
/// sine law directly.
fn snell_by_angles(d: Vec3, n: Vec3, eta: f64) -> Option<Vec3> {
    let cos_i = -d.dot(&n);
    let tangent = d + n * cos_i;
    let sin_i = tangent.norm();
    let sin_t = sin_i / eta;
    if sin_t > 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin_t * sin_t).sqrt();
    let along = if sin_i > 0.0 { tangent / sin_i } else { Vec3::zeros() };
    Some(along * sin_t - n * cos_t)
}

#[test]
fn refraction_offsets_follow_snell() {
    let n = 64;
    let eta = 1.33;
    let (cx, cy, r) = (0.5, 0.5, 0.3);
    let bump = Field2D::from_uv_fn(n, n, |u, v| 0.2 * (1.0 - ((u - cx).powi(2) + (v - cy).powi(2)) / (r * r)).max(0.0));
    let mut scene = MockScene::new(n, n, vec![Light::directional(Vec3::new(0.0, 0.0, -1.0), Rgba::WHITE)]);
    scene
        .layers
        .push(flat_layer("floor", n, Field2D::new(n, n, 0.0), Field2D::new(n, n, 1.0)));
    let mut lens = flat_layer("lens", n, bump, Field2D::new(n, n, 1.0));
    lens.c = 0.25;
    lens.material.transmissive = true;
    scene.layers.push(lens);
    let out = refract_offset(&scene, "lens", eta, 0.0).unwrap();
    let normals = scene.layers[1].shape.normals();
    let d = Vec3::new(0.0, 0.0, -1.0);
    let mut bent = 0;
    for j in 0..n {
        for i in 0..n {
            let t = snell_by_angles(d, normals.get(i, j), eta).unwrap();
            let expect = Vec2::new(t.x, t.y) * (0.25 / t.z.abs());
            let got = out.offsets.get(i, j);
            assert!((got - expect).norm() < 1e-6, "pixel ({i},{j}): {got:?} vs {expect:?}");
            bent += usize::from(expect.norm() > 1e-4);
        }
    }
    assert!(bent > n * n / 4, "the bump should bend a sizable area");
}

#[test]
fn normal_incidence_fresnel_is_f0() {
    let n = 8;
    let mut scene = MockScene::new(n, n, vec![Light::directional(Vec3::new(0.0, 0.0, -1.0), Rgba::WHITE)]);
    let mut glass = flat_layer("glass", n, Field2D::new(n, n, 0.0), Field2D::new(n, n, 1.0));
    glass.material.transmissive = true;
    scene.layers.push(glass);
    let out = refract_offset(&scene, "glass", 1.5, 0.0).unwrap();
    for f in out.fresnel.values() {
        assert!((f - 0.04).abs() < 1e-12);
    }
    assert!(out.offsets.values().iter().all(|o| o.norm() == 0.0));
}

#[test]
fn mirror_reflects_about_the_waterline() {
    let n = 64;
    let mut scene = MockScene::new(n, n, vec![Light::directional(Vec3::new(0.0, 0.0, -1.0), Rgba::WHITE)]);
    scene.exposure = Some(1.0);
    let stripe = Field2D::from_uv_fn(n, n, |_, v| if (0.2..0.3).contains(&v) { 1.0 } else { 0.0 });
    let mut floor = flat_layer("floor", n, Field2D::new(n, n, 0.0), Field2D::new(n, n, 1.0));
    floor.material.diffuse_albedo = stripe.map(Rgba::gray);
    scene.layers.push(floor);
    let mut water = flat_layer(
        "water",
        n,
        Field2D::new(n, n, 0.0),
        Field2D::from_uv_fn(n, n, |_, v| if v > 0.5 { 1.0 } else { 0.0 }),
    );
    water.c = 0.01;
    water.material.mirror = Some(0.5);
    scene.layers.push(water);
    let refl = mirror_reflect(&scene, "water", 0.0).unwrap();
    // Stripe rows 0.2..0.3 reflect to 0.7..0.8 about the waterline at v = 0.5.
    for j in 0..n {
        let v = (j as f64 + 0.5) / n as f64;
        let got = refl.get(n / 2, j).r();
        if (0.71..0.79).contains(&v) {
            assert!((got - 1.0).abs() < 1e-9, "row {j}: {got}");
        } else if !(0.69..0.81).contains(&v) {
            assert!(got.abs() < 1e-9, "row {j}: {got}");
        }
    }
}

#[test]
fn unit_box_band_matches_flatland() {
    let n = 512;
    let field = Field2D::from_uv_fn(n, n, |u, _| if (0.4..=0.5).contains(&u) { 1.0 } else { 0.0 });
    let vis = cast_shadow(&field, &Light::from_elevation(0.0, FRAC_PI_4, Rgba::WHITE), 1);
    let flat = flatland_render(
        &FlatScene::flat(
            1.0,
            vec![FlatOccluder {
                a: 0.4,
                b: 0.5,
                height: 1.0,
            }],
            FlatLight::Directional { elevation: FRAC_PI_4 },
        ),
        n,
    );
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        assert_eq!(vis.get(i, n / 3) == 0.0, flat.shadow_mask[i]);
        assert_eq!(flat.shadow_mask[i], u > 0.5);
    }
}

/// Every disagreement must sit next to an oracle boundary, and each boundary
/// may absorb at most one.
fn boundary_disagreement_ok(ours: &[bool], oracle: &[bool]) -> bool {
    let n = oracle.len();
    let boundaries: Vec<usize> = (1..n).filter(|&k| oracle[k] != oracle[k - 1]).collect();
    let mut used = vec![0usize; boundaries.len()];
    for k in (0..n).filter(|&k| ours[k] != oracle[k]) {
        match boundaries.iter().position(|&b| b == k || b == k + 1) {
            Some(p) => used[p] += 1,
            None => return false,
        }
    }
    used.iter().all(|&c| c <= 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extruded_boxes_match_flatland(
        boxes in prop::collection::vec((0.05f64..0.85, 0.02f64..0.12, 0.02f64..0.4), 1..3),
        elevation in 0.25f64..1.3,
        from_right in any::<bool>(),
    ) {
        let n = 256;
        let occluders: Vec<FlatOccluder> = boxes.iter().map(|&(a, w, h)| FlatOccluder { a, b: a + w, height: h }).collect();
        let field = Field2D::from_uv_fn(n, n, |u, _| {
            occluders.iter().filter(|o| o.a <= u && u <= o.b).map(|o| o.height).fold(0.0, f64::max)
        });
        let azimuth = if from_right { PI } else { 0.0 };
        let vis = cast_shadow(&field, &Light::from_elevation(azimuth, elevation, Rgba::WHITE), 1);
        let flat_elev = if from_right { PI - elevation } else { elevation };
        let flat = flatland_render(&FlatScene::flat(1.0, occluders, FlatLight::Directional { elevation: flat_elev }), n);
        let ours: Vec<bool> = (0..n).map(|i| vis.get(i, n / 2) == 0.0).collect();
        prop_assert!(boundary_disagreement_ok(&ours, &flat.shadow_mask));
    }
}

/// Plaquette circulation per unit area from the slope field, written out
/// independently of the library.
fn circulation(p: &Field2D<Vec2>, i: usize, j: usize) -> f64 {
    let (du, dv) = (1.0 / p.width() as f64, 1.0 / p.height() as f64);
    let bottom = (p.get(i, j).x + p.get(i + 1, j).x) / 2.0 * du;
    let right = (p.get(i + 1, j).y + p.get(i + 1, j + 1).y) / 2.0 * dv;
    let top = (p.get(i, j + 1).x + p.get(i + 1, j + 1).x) / 2.0 * du;
    let left = (p.get(i, j).y + p.get(i, j + 1).y) / 2.0 * dv;
    (bottom + right - top - left) / (du * dv)
}

fn normals_from_slopes(p: &Field2D<Vec2>) -> Field2D<Vec3> {
    p.map(|s| Vec3::new(-s.x, -s.y, 1.0).normalize())
}

#[test]
fn library_circulation_matches_reference() {
    let n = 48;
    let p = Field2D::from_uv_fn(n, n, |u, v| Vec2::new((3.0 * v).sin() + u * u, (2.0 * u).cos() * v));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            assert!((discrete_circulation(&p, i, j) - circulation(&p, i, j)).abs() < 1e-9);
        }
    }
}

#[test]
fn rotational_field_curl_matches_circulation() {
    let n = 256;
    let p = Field2D::from_uv_fn(n, n, |u, v| Vec2::new(-(v - 0.5), u - 0.5));
    let report = curl_residual(&normals_from_slopes(&p), DEFAULT_EPS_Z);
    let (slopes, _) = normals_to_slopes(&normals_from_slopes(&p), DEFAULT_EPS_Z);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            assert!((report.residual.get(i, j) - 2.0).abs() <= 1e-6);
            assert!((circulation(&slopes, i, j) - 2.0).abs() <= 1e-6);
        }
    }
}
