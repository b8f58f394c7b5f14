use std::f64::consts::PI;

use jcurve::bubble::*;
use jcurve::calculus::{energy, lp_norm_field};
use jcurve::io::{write_sample, GridDescriptor};
use jcurve::{Error, Grid, MapSample, Region};
use num_complex::Complex64;
use proptest::prelude::*;

const EPS: f64 = 1.0;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Amplitude giving a bump of support `support` the energy `e`.
fn amplitude(e: f64, support: f64) -> f64 {
    (e * 35.0 / (12.0 * PI)).sqrt() / support
}

/// `g(z/r)` with `g` a bump of support 4 and energy `5ε`.
fn concentrating(grid: &Grid, r: f64, at: Complex64) -> MapSample {
    let g = bump_profile(amplitude(5.0 * EPS, 4.0), 4.0);
    MapSample::scalar(grid, |z| g((z - at) / r)).unwrap()
}

fn canonical_family(grid: &Grid) -> SequenceFamily {
    SequenceFamily::new((2..=6).map(|n| concentrating(grid, 0.5f64.powi(n), c(0.0, 0.0))).collect()).unwrap()
}

#[test]
fn profile_energy_closed_form() {
    let g = Grid::disk(1.0, 401).unwrap();
    let u = MapSample::scalar(&g, bump_profile(1.3, 0.9)).unwrap();
    let e = energy(&u, &Region::full(&g)).unwrap();
    let exact = bump_profile_energy(1.3, 0.9);
    assert!((e - exact).abs() < 0.01 * exact, "{e} vs {exact}");
}

#[test]
fn cover_of_unit_disk() {
    let g = Grid::disk(1.0, 101).unwrap();
    let cover = patch_cover(&g, 0.5).unwrap();
    for k in 0..g.node_count() {
        if !g.node_in_domain(k) {
            continue;
        }
        let z = g.point(k);
        let m = cover.disks.iter().filter(|d| (z - d.center).norm() < d.radius).count();
        assert!((1..=3).contains(&m), "node {k} in {m} disks");
    }
    assert!(cover.multiplicity <= 3);
    assert!(cover.disks.iter().all(|d| 2.0 * d.radius < 0.5));
}

#[test]
fn cover_count_scales_with_area() {
    let g = Grid::disk(1.0, 201).unwrap();
    let coarse = patch_cover(&g, 0.5).unwrap().disks.len() as f64;
    let fine = patch_cover(&g, 0.25).unwrap().disks.len() as f64;
    let ratio = fine / coarse;
    assert!((ratio - 4.0).abs() <= 0.3 * 4.0, "{ratio}");
}

#[test]
fn cover_of_small_domain_is_one_disk() {
    let g = Grid::disk(0.2, 41).unwrap();
    assert_eq!(patch_cover(&g, 0.5).unwrap().disks.len(), 1);
    assert!(patch_cover(&g, 0.01).is_err());
}

#[test]
fn constant_family_has_no_bubbles() {
    let g = Grid::disk(1.0, 65).unwrap();
    let fam = SequenceFamily::new(vec![MapSample::constant(&g, &[c(1.0, 2.0)]).unwrap(); 4]).unwrap();
    assert!(find_bubble_points(&fam, EPS).unwrap().is_empty());
    assert!(find_bubble_points(&fam, 0.0).is_err());
    let two = SequenceFamily::new(fam.members()[..2].to_vec()).unwrap();
    assert!(find_bubble_points(&two, EPS).is_err());
}

#[test]
fn canonical_family_bubbles_at_origin() {
    let g = Grid::disk(1.0, 257).unwrap();
    let pts = find_bubble_points(&canonical_family(&g), EPS).unwrap();
    assert_eq!(pts.len(), 1);
    assert!(pts[0].norm() <= g.spacing()[0]);
}

#[test]
fn off_center_bubble_is_located() {
    let g = Grid::disk(1.0, 257).unwrap();
    let at = c(0.3, -0.2);
    let fam = SequenceFamily::new((3..=7).map(|n| concentrating(&g, 0.5f64.powi(n), at)).collect()).unwrap();
    let pts = find_bubble_points(&fam, EPS).unwrap();
    assert_eq!(pts.len(), 1);
    assert!((pts[0] - at).norm() <= g.spacing()[0] * 1.5);
}

#[test]
fn convergent_family_has_no_bubbles() {
    let g = Grid::disk(1.0, 129).unwrap();
    // Total energy 0.8ε, converging strongly as n grows.
    let base = bump_profile(amplitude(0.8 * EPS, 0.6), 0.6);
    let fam = SequenceFamily::new(
        (1..=5)
            .map(|n| MapSample::scalar(&g, |z| base(z) * (1.0 - 0.5f64.powi(n + 2)) + 0.01 / n as f64 * z).unwrap())
            .collect(),
    )
    .unwrap();
    assert!(fam.members().iter().all(|u| energy(u, &Region::full(&g)).unwrap() < EPS));
    assert!(find_bubble_points(&fam, EPS).unwrap().is_empty());
}

#[test]
fn stationary_concentration_is_not_a_bubble() {
    let g = Grid::disk(1.0, 129).unwrap();
    let u = concentrating(&g, 0.1, c(0.1, 0.1));
    let fam = SequenceFamily::new(vec![u; 5]).unwrap();
    assert!(find_bubble_points(&fam, EPS).unwrap().is_empty());
}

#[test]
fn maximal_radius_cap_for_constant() {
    let g = Grid::disk(1.0, 65).unwrap();
    let u = MapSample::constant(&g, &[c(3.0, 0.0)]).unwrap();
    let r = maximal_radius(&u, EPS, 0.6, &Region::disk(&g, c(0.0, 0.0), 0.5).unwrap()).unwrap();
    assert_eq!(r, 0.3);
    assert!(concentration_center(&u, r, EPS, &Region::full(&g)).is_err());
}

#[test]
fn maximal_radius_scales_linearly() {
    let g = Grid::disk(1.0, 513).unwrap();
    let region = Region::disk(&g, c(0.0, 0.0), 0.05).unwrap();
    let ratios: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&r0| maximal_radius(&concentrating(&g, r0, c(0.0, 0.0)), EPS, 0.5, &region).unwrap() / r0)
        .collect();
    for r in &ratios {
        assert!((r / ratios[0] - 1.0).abs() < 0.1, "{ratios:?}");
    }
    // Radius at which the centered profile holds ε, from the radial closed form.
    let s = radius_holding(0.2) * 4.0;
    assert!((ratios[0] - s).abs() < 0.1 * s, "{ratios:?} vs {s}");
}

/// Radius (in support units) inside which the bump profile holds `frac` of its energy.
fn radius_holding(frac: f64) -> f64 {
    // Energy fraction inside radius ρ: 1 − (1−ρ²)⁵(1 + 5ρ² − 15ρ⁴)·… evaluated numerically.
    let density = |s: f64| (1.0 - s).powi(4) * (1.0 - 8.0 * s + 25.0 * s * s);
    let total = 6.0 / 35.0;
    let (mut acc, n) = (0.0, 200_000);
    for i in 0..n {
        let s = (i as f64 + 0.5) / n as f64;
        acc += density(s) / n as f64;
        if acc >= frac * total {
            return s.sqrt();
        }
    }
    1.0
}

#[test]
fn maximal_radius_monotone_in_epsilon() {
    let g = Grid::disk(1.0, 257).unwrap();
    let u = concentrating(&g, 0.08, c(0.0, 0.0));
    let region = Region::disk(&g, c(0.0, 0.0), 0.1).unwrap();
    let mut prev = 0.0;
    for e in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let r = maximal_radius(&u, e, 1.0, &region).unwrap();
        assert!(r > prev, "ε={e}: {r} ≤ {prev}");
        prev = r;
    }
}

#[test]
fn maximal_radius_saturation_is_reported() {
    let g = Grid::disk(1.0, 33).unwrap();
    let u = concentrating(&g, 0.05, c(0.0, 0.0));
    let err = maximal_radius(&u, 1e-3, 1.0, &Region::full(&g)).unwrap_err();
    assert!(matches!(err, Error::HypothesisViolated(_)));
}

#[test]
fn center_of_off_center_bump() {
    let g = Grid::disk(1.0, 201).unwrap();
    let u = concentrating(&g, 0.04, c(0.3, 0.1));
    let region = Region::full(&g);
    let r = maximal_radius(&u, EPS, 0.8, &region).unwrap();
    let found = concentration_center(&u, r, EPS, &region).unwrap();
    assert!((found.center - c(0.3, 0.1)).norm() <= g.spacing()[0]);
    assert!(found.energy <= EPS && found.energy >= EPS - found.quantization);
}

#[test]
fn equal_bumps_tie_to_lowest_index() {
    let g = Grid::disk(1.0, 101).unwrap();
    let (l, r) = (concentrating(&g, 0.05, c(-0.4, 0.0)), concentrating(&g, 0.05, c(0.4, 0.0)));
    let u = l.with_values(l.values().iter().zip(r.values()).map(|(a, b)| a + b).collect()).unwrap();
    let region = Region::full(&g);
    let rad = maximal_radius(&u, EPS, 0.8, &region).unwrap();
    let found = concentration_center(&u, rad, EPS, &region).unwrap();
    assert!((found.center - c(-0.4, 0.0)).norm() < 1e-12, "{}", found.center);
}

#[test]
fn rescale_identity_window() {
    let g = Grid::disk(1.0, 41).unwrap();
    let u = MapSample::scalar(&g, |z| z * z * z - 0.4 * z.conj()).unwrap();
    let v = rescale(&u, c(0.0, 0.0), 1.0, 1.0).unwrap();
    assert_eq!(v.grid(), u.grid());
    for (a, b) in u.values().iter().zip(v.values()) {
        assert!((a - b).norm() <= 1e-10);
    }
}

#[test]
fn rescale_preserves_energy() {
    let g = Grid::disk(1.0, 257).unwrap();
    let x = c(0.3, 0.1);
    let bump = bump_profile(1.5, 0.2);
    let u = MapSample::scalar(&g, |z| bump(z - x) + 0.5 * z * z).unwrap();
    let v = rescale(&u, x, 0.1, 2.0).unwrap();
    let ev = energy(&v, &Region::full(v.grid())).unwrap();
    let eu = energy(&u, &Region::disk(&g, x, 0.2).unwrap()).unwrap();
    assert!((ev - eu).abs() < 0.03 * eu, "{ev} vs {eu}");
    assert!(matches!(rescale(&u, x, 0.5, 2.0), Err(Error::OutOfDomain(_))));
}

#[test]
fn rescaled_family_is_cauchy() {
    let g = Grid::disk(1.0, 513).unwrap();
    let x = c(0.3, 0.0);
    let bump = bump_profile(1.0, 1.0);
    let vs: Vec<MapSample> = (1..=4)
        .map(|n| {
            let r = 0.5f64.powi(n);
            let u = MapSample::scalar(&g, |z| bump((z - x) / r) + r * (2.0 + z)).unwrap();
            rescale_to(&u, x, r, 1.0, 129).unwrap()
        })
        .collect();
    let diffs: Vec<f64> = vs
        .windows(2)
        .map(|w| {
            let d = w[1].sub(&w[0]).unwrap();
            lp_norm_field(d.grid(), 1, d.values(), 2.0, &Region::full(d.grid())).unwrap()
        })
        .collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
}

#[test]
fn interior_subcases() {
    let n: Vec<f64> = (1..=9).map(f64::from).collect();
    let r: Vec<f64> = n.iter().map(|k| 0.5f64.powf(*k)).collect();
    let bounded: Vec<f64> = r.iter().map(|x| 3.0 * x).collect();
    assert_eq!(classify_subcase(&bounded, &r, None).unwrap(), Subcase::Prime);
    let growing: Vec<f64> = r.iter().zip(&n).map(|(x, k)| x * k).collect();
    assert_eq!(classify_subcase(&growing, &r, None).unwrap(), Subcase::DoublePrime);
    assert!(classify_subcase(&bounded[..4], &r[..4], None).is_err());
}

#[test]
fn boundary_subcases() {
    let n: Vec<f64> = (1..=9).map(f64::from).collect();
    let r: Vec<f64> = n.iter().map(|k| 0.5f64.powf(*k)).collect();
    let scale = |s: &[f64], f: &dyn Fn(f64) -> f64| s.iter().zip(&n).map(|(x, k)| x * f(*k)).collect::<Vec<f64>>();
    let rho2 = scale(&r, &|_| 2.0);
    // ρ/r ≡ 2 with R/r ≡ 3: R/r bounded.
    assert_eq!(classify_subcase(&scale(&r, &|_| 3.0), &r, Some(&rho2)).unwrap(), Subcase::PrimeB);
    // ρ/r ≡ 2 with R/r = n: R/r unbounded, ρ/r bounded.
    assert_eq!(classify_subcase(&scale(&r, &|k| k), &r, Some(&rho2)).unwrap(), Subcase::DoublePrimeB);
    // ρ/r = n with R/ρ ≡ 2.
    let rho_n = scale(&r, &|k| k);
    assert_eq!(classify_subcase(&scale(&rho_n, &|_| 2.0), &r, Some(&rho_n)).unwrap(), Subcase::TriplePrimeB);
    // ρ/r = n with R/ρ = n.
    assert_eq!(classify_subcase(&scale(&rho_n, &|k| k), &r, Some(&rho_n)).unwrap(), Subcase::QuadruplePrimeB);
}

#[test]
fn subcase_labels_serialize() {
    assert_eq!(serde_json::to_string(&Subcase::PrimeB).unwrap(), "\"3'_b\"");
    assert_eq!(serde_json::to_string(&Subcase::None).unwrap(), "\"none\"");
    assert_eq!(Subcase::QuadruplePrimeB.label(), "3''''_b");
}

proptest! {
    #[test]
    fn classification_is_scale_invariant(
        seq in proptest::collection::vec((0.1f64..10.0, 0.01f64..1.0, 0.0f64..5.0), 5..12),
        s in 1e-3f64..1e3,
        boundary in any::<bool>(),
    ) {
        let big_r: Vec<f64> = seq.iter().map(|t| t.0).collect();
        let r: Vec<f64> = seq.iter().map(|t| t.1).collect();
        let rho: Vec<f64> = seq.iter().map(|t| t.2 + 0.01).collect();
        let scaled = |v: &[f64]| v.iter().map(|x| x * s).collect::<Vec<f64>>();
        let rho_opt = boundary.then_some(rho.as_slice());
        let srho = scaled(&rho);
        let srho_opt = boundary.then_some(srho.as_slice());
        prop_assert_eq!(
            classify_subcase(&big_r, &r, rho_opt).unwrap(),
            classify_subcase(&scaled(&big_r), &scaled(&r), srho_opt).unwrap()
        );
    }
}

#[test]
fn quantization_examples() {
    let g = Grid::disk(1.0, 201).unwrap();
    let eps3 = 0.7;
    let constant = quantization_gate(&MapSample::constant(&g, &[c(1.0, 0.0)]).unwrap(), eps3).unwrap();
    assert_eq!(constant.energy, 0.0);
    assert!(!constant.candidate);
    let big = MapSample::scalar(&g, bump_profile(amplitude(5.0 * eps3, 0.8), 0.8)).unwrap();
    let v = quantization_gate(&big, eps3).unwrap();
    assert!(v.candidate && v.energy >= 5.0 * eps3 * 0.98 && v.oscillation > 0.0);
    let small = MapSample::scalar(&g, bump_profile(amplitude(0.5 * eps3, 0.8), 0.8)).unwrap();
    assert!(!quantization_gate(&small, eps3).unwrap().candidate);
    assert!(quantization_gate(&small, 0.0).is_err());
}

#[test]
fn canonical_family_report() {
    let g = Grid::disk(1.0, 257).unwrap();
    let fam = canonical_family(&g);
    let rep = analyze_family(&fam, &BubbleOptions::new(EPS)).unwrap();
    assert_eq!(rep.points.len(), 1);
    assert_eq!(rep.radii.len(), 5);
    let h = g.spacing()[0];
    for (k, (&r, n)) in rep.radii.iter().zip(2..=6).enumerate() {
        let rn = 0.5f64.powi(n);
        assert!(r > 0.0);
        assert!(rep.centers[k][0].hypot(rep.centers[k][1]) <= h);
        if rn >= 4.0 * h {
            assert!((0.5..=2.0).contains(&(r / rn)), "n={n}: {}", r / rn);
        }
    }
    assert_eq!(rep.subcase, Subcase::Prime);
    assert!(rep.profile_energy > EPS && rep.profile_energy < 5.0 * EPS * 1.05);
    let json = serde_json::to_value(&rep).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 5);
    for key in ["points", "radii", "centers", "subcase", "profile_energy"] {
        assert!(keys.contains(&key));
    }
    assert_eq!(json["subcase"], "3'");
}

#[test]
fn family_directory_round_trip() {
    let dir = std::env::temp_dir().join(format!("jcurve-family-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let g = Grid::disk(1.0, 33).unwrap();
    let members: Vec<MapSample> = (0..3).map(|n| MapSample::scalar(&g, |z| z * (n as f64 + 1.0)).unwrap()).collect();
    let mut names = Vec::new();
    for (n, u) in members.iter().enumerate() {
        let name = format!("u{n}.csv");
        write_sample(u, &dir.join(&name), &dir.join(format!("u{n}.json"))).unwrap();
        names.push(name);
    }
    let manifest = FamilyManifest {
        grid: GridDescriptor::of(&members[0]),
        members: names,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string(&manifest).unwrap()).unwrap();
    let fam = SequenceFamily::load_dir(&dir).unwrap();
    assert_eq!(fam.members(), members.as_slice());
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(matches!(SequenceFamily::load_dir(&dir), Err(Error::Io { .. })));
}

#[test]
fn family_rejects_mixed_grids() {
    let a = MapSample::constant(&Grid::disk(1.0, 33).unwrap(), &[c(0.0, 0.0)]).unwrap();
    let b = MapSample::constant(&Grid::disk(1.0, 35).unwrap(), &[c(0.0, 0.0)]).unwrap();
    assert!(SequenceFamily::new(vec![a, b]).is_err());
    assert!(SequenceFamily::new(Vec::new()).is_err());
}
