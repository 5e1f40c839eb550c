use affordkit::geometry::{
    compose, estimate_homography_dlt, lift_to_3d, project_to_pixel, Correspondence, Homography,
};
use affordkit::{CameraIntrinsics, Point2D};
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
    Homography::from_row_major([
        1.0 + rng.random_range(-0.1..0.1),
        rng.random_range(-0.1..0.1),
        rng.random_range(-20.0..20.0),
        rng.random_range(-0.1..0.1),
        1.0 + rng.random_range(-0.1..0.1),
        rng.random_range(-20.0..20.0),
        rng.random_range(-1e-4..1e-4),
        rng.random_range(-1e-4..1e-4),
        1.0,
    ])
    .unwrap()
}

fn sample_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point2D> {
    (0..n)
        .map(|_| Point2D::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)))
        .collect()
}

#[test]
fn chain_of_nine_equals_direct_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let steps: Vec<Homography> = (0..9).map(|_| random_homography(&mut rng)).collect();
    let chained = steps
        .iter()
        .fold(Homography::identity(), |acc, h| compose(&acc, h));
    for p in sample_points(&mut rng, 50) {
        let mut q = p;
        for h in &steps {
            q = h.apply(q).unwrap();
        }
        assert!(chained.apply(p).unwrap().distance(&q) <= 1e-6);
    }
}

#[test]
fn dlt_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let h = random_homography(&mut rng);
        let corrs: Vec<Correspondence> = sample_points(&mut rng, 12)
            .into_iter()
            .map(|p| Correspondence::new(p, h.apply(p).unwrap()))
            .collect();
        let s = rng.random_range(0.01..100.0);
        let scaled: Vec<Correspondence> = corrs
            .iter()
            .map(|c| {
                Correspondence::new(
                    Point2D::new(c.src.u * s, c.src.v * s),
                    Point2D::new(c.dst.u * s, c.dst.v * s),
                )
            })
            .collect();
        let a = estimate_homography_dlt(&corrs).unwrap();
        let b = estimate_homography_dlt(&scaled).unwrap();
        let scale = Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0);
        let unscale = Matrix3::new(1.0 / s, 0.0, 0.0, 0.0, 1.0 / s, 0.0, 0.0, 0.0, 1.0);
        let conj = Homography::from_matrix(unscale * b.matrix() * scale).unwrap();
        assert!((conj.matrix() - a.matrix()).abs().max() <= 1e-8);
    }
}

fn intrinsics() -> impl Strategy<Value = CameraIntrinsics> {
    (100.0..2000.0f64, 100.0..2000.0f64, 0.0..1280.0f64, 0.0..960.0f64)
        .prop_map(|(fx, fy, cx, cy)| CameraIntrinsics::new(fx, fy, cx, cy).unwrap())
}

proptest! {
    #[test]
    fn compose_is_associative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (
            random_homography(&mut rng),
            random_homography(&mut rng),
            random_homography(&mut rng),
        );
        let left = compose(&compose(&a, &b), &c);
        let right = compose(&a, &compose(&b, &c));
        prop_assert!((left.matrix() - right.matrix()).abs().max() <= 1e-9);
    }

    #[test]
    fn lift_then_project_is_identity(
        u in 0.0..1280.0f64,
        v in 0.0..960.0f64,
        depth in 0.05..20.0f64,
        k in intrinsics(),
    ) {
        let p = Point2D::new(u, v);
        let back = project_to_pixel(lift_to_3d(p, depth, &k).unwrap(), &k).unwrap();
        prop_assert!(back.distance(&p) <= 1e-9);
    }
}
