use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sphere_bergman_core::geometry::log_chordal_sigma;
use sphere_bergman_core::sections::random_unit_vector;
use sphere_bergman_core::zeros::zero_divisor;
use sphere_bergman_core::{
    chordal_sigma, dimension, sample_section, PoleSet, Preset, ProjectivePoint, RandomSection, SectionSpace,
    SphereGrid, WeightSpec,
};

fn point(idx: u8, re: f64, im: f64) -> ProjectivePoint {
    match idx % 4 {
        0 => ProjectivePoint::origin(),
        1 => ProjectivePoint::infinity(),
        _ => ProjectivePoint::affine(Complex64::new(re, im)),
    }
}

fn poles_strategy() -> impl Strategy<Value = Vec<(u8, f64, f64, u32)>> {
    prop::collection::vec((0u8..8, -3.0f64..3.0, -3.0f64..3.0, 1u32..40), 0..4)
}

/// Drops later entries that land on an earlier pole.
fn build_poles(raw: &[(u8, f64, f64, u32)]) -> PoleSet {
    let mut pairs: Vec<(ProjectivePoint, f64)> = Vec::new();
    for &(idx, re, im, n) in raw {
        let x = point(idx, re, im);
        if pairs.iter().all(|(y, _)| chordal_sigma(&x, y) > 1e-3) {
            pairs.push((x, f64::from(n) / 20.0));
        }
    }
    PoleSet::from_pairs(&pairs).unwrap()
}

/// Gram–Schmidt on a complex Gaussian matrix.
fn random_unitary(n: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    while rows.len() < n {
        let mut v = random_unit_vector(&mut rng, n);
        for r in &rows {
            let dot: Complex64 = v.iter().zip(r).map(|(a, b)| a * b.conj()).sum();
            for (vi, ri) in v.iter_mut().zip(r) {
                *vi -= dot * ri;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|z| z / norm).collect());
        }
    }
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_a_tau_never_adds_sections(k in 1u32..4, p in 1u32..120, raw in poles_strategy(), which in 0usize..4, extra in 1u32..10) {
        let poles = build_poles(&raw);
        let before = dimension(k, p, &poles);
        if !poles.is_empty() {
            let mut pairs: Vec<(ProjectivePoint, f64)> = poles.poles().iter().map(|q| (q.point, q.tau)).collect();
            let i = which % pairs.len();
            pairs[i].1 += f64::from(extra) / 20.0;
            prop_assert!(dimension(k, p, &PoleSet::from_pairs(&pairs).unwrap()) <= before);
        }
        // an additional pole is one more constraint
        let mut pairs: Vec<(ProjectivePoint, f64)> = poles.poles().iter().map(|q| (q.point, q.tau)).collect();
        let fresh = ProjectivePoint::affine(Complex64::new(7.25, -3.5));
        pairs.push((fresh, 0.05));
        prop_assert!(dimension(k, p, &PoleSet::from_pairs(&pairs).unwrap()) <= before);
    }

    #[test]
    fn kernel_is_basis_independent(seed in any::<u64>(), re in -4.0f64..4.0, im in -4.0f64..4.0) {
        let poles = PoleSet::from_pairs(&[(ProjectivePoint::affine(Complex64::new(0.5, 0.5)), 0.3)]).unwrap();
        let weight = WeightSpec::Preset(Preset::Tilted { c: 0.2 });
        let (nr, na) = SphereGrid::floor_for(1, 15);
        let grid = SphereGrid::new(nr, na).unwrap();
        let space = SectionSpace::build(1, 15, &poles, &weight, &grid).unwrap();
        let x = ProjectivePoint::affine(Complex64::new(re, im));
        let (_, v) = space.basis_values(&x);
        let u = random_unitary(v.len(), seed);
        let direct: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let rotated: f64 = u
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
            .sum();
        prop_assert!((rotated / direct - 1.0).abs() < 1e-10);
    }

    #[test]
    fn charts_agree(re in -50.0f64..50.0, im in -50.0f64..50.0, are in -5.0f64..5.0, aim in -5.0f64..5.0) {
        let z = Complex64::new(re, im);
        prop_assume!(z.norm() > 1e-3);
        let a = ProjectivePoint::affine(z);
        let b = ProjectivePoint::from_infinity_chart(z.inv());
        prop_assert!((a.u() - b.u()).abs() < 1e-13);
        prop_assert!((a.one_minus_u() - b.one_minus_u()).abs() < 1e-13);
        let c = ProjectivePoint::affine(Complex64::new(are, aim));
        prop_assert!((chordal_sigma(&a, &c) - chordal_sigma(&b, &c)).abs() < 1e-13);
        prop_assert!((log_chordal_sigma(&a, &ProjectivePoint::infinity()) - log_chordal_sigma(&b, &ProjectivePoint::infinity())).abs() < 1e-12);
    }

    #[test]
    fn divisor_total_and_scale_invariance(k in 1u32..3, p in 2u32..30, raw in poles_strategy(), seed in any::<u64>(), cre in -3.0f64..3.0, cim in -3.0f64..3.0) {
        let poles = build_poles(&raw);
        prop_assume!(dimension(k, p, &poles) >= 2);
        let (nr, na) = SphereGrid::floor_for(k, p);
        let grid = SphereGrid::new(nr, na).unwrap();
        let space = SectionSpace::build(k, p, &poles, &WeightSpec::Zero, &grid).unwrap();
        let s = sample_section(&space, seed).unwrap();
        let d = zero_divisor(&space, &s).unwrap();
        prop_assert_eq!(d.total, k * p);
        prop_assert_eq!(d.points.iter().map(|x| x.multiplicity).sum::<u32>(), k * p);

        let c = Complex64::new(cre, cim);
        prop_assume!(c.norm() > 1e-3);
        let scaled = RandomSection { coeffs: s.coeffs.iter().map(|z| z * c).collect(), seed };
        let e = zero_divisor(&space, &scaled).unwrap();
        prop_assert_eq!(e.total, d.total);
        for x in &d.points {
            let near = e.multiplicity_near(&x.point, 1e-10);
            prop_assert!(near >= x.multiplicity.min(1), "zero {:?} lost under scaling", x.point);
        }
    }
}
