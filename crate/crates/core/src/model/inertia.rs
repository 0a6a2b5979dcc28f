use super::{LinkShape, ModelError};

/// Principal inertia `[Ixx, Iyy, Izz]` of a uniform solid about its COM,
/// with z along the length.
///
/// The COM offset does not enter here; the dynamics shift the spatial
/// inertia to the joint frame.
pub fn compute_link_inertia(
    shape: LinkShape,
    diameter: f64,
    length: f64,
    mass: f64,
    com_offset: f64,
) -> Result<[f64; 3], ModelError> {
    if !(mass.is_finite() && diameter.is_finite() && length.is_finite() && com_offset.is_finite())
    {
        return Err(ModelError::Domain("non-finite geometry".into()));
    }
    if mass <= 0.0 || diameter <= 0.0 || length < 0.0 {
        return Err(ModelError::Domain(format!(
            "mass={mass}, diameter={diameter}, length={length}"
        )));
    }
    let l2 = length * length;
    let (axial, transverse) = match shape {
        LinkShape::Cylinder => {
            let r2 = 0.25 * diameter * diameter;
            (0.5 * mass * r2, mass * (3.0 * r2 + l2) / 12.0)
        }
        LinkShape::Box => {
            let d2 = diameter * diameter;
            (mass * (d2 + d2) / 12.0, mass * (d2 + l2) / 12.0)
        }
    };
    Ok([transverse, transverse, axial])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_disc() {
        let i = compute_link_inertia(LinkShape::Cylinder, 2.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(i[2], 0.5);
        assert_eq!(i[0], 0.25);
        assert_eq!(i[1], 0.25);
        // flat lamina: Ixx + Iyy = Izz
        assert_eq!(i[0] + i[1], i[2]);
    }

    #[test]
    fn cylinder_transverse_value() {
        // 2 * (3 * 0.0025 + 0.16) / 12
        let i = compute_link_inertia(LinkShape::Cylinder, 0.1, 0.4, 2.0, 0.0).unwrap();
        assert!((i[0] - 0.027_916_666_666_666_667).abs() < 1e-15);
    }

    #[test]
    fn cube_is_isotropic() {
        let i = compute_link_inertia(LinkShape::Box, 0.1, 0.1, 1.0, 0.0).unwrap();
        let expected = 1.0 * (0.01 + 0.01) / 12.0;
        for v in i {
            assert!((v - expected).abs() < 1e-17);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(compute_link_inertia(LinkShape::Box, 0.0, 0.1, 1.0, 0.0).is_err());
        assert!(compute_link_inertia(LinkShape::Box, 0.1, 0.1, -1.0, 0.0).is_err());
        assert!(compute_link_inertia(LinkShape::Cylinder, 0.1, -0.1, 1.0, 0.0).is_err());
    }

    /// Monte Carlo volume integral of the second moments of a uniform solid.
    fn monte_carlo(shape: LinkShape, d: f64, l: f64, m: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
        const N: usize = 1_000_000;
        let mut acc = [0.0f64; 3];
        let mut accepted = 0usize;
        while accepted < N {
            let x = (rng.random::<f64>() - 0.5) * d;
            let y = (rng.random::<f64>() - 0.5) * d;
            let z = (rng.random::<f64>() - 0.5) * l;
            if shape == LinkShape::Cylinder && x * x + y * y > 0.25 * d * d {
                continue;
            }
            acc[0] += y * y + z * z;
            acc[1] += x * x + z * z;
            acc[2] += x * x + y * y;
            accepted += 1;
        }
        acc.map(|a| m * a / N as f64)
    }

    #[test]
    fn closed_forms_match_volume_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..4 {
            let shape = if rng.random::<bool>() { LinkShape::Box } else { LinkShape::Cylinder };
            let d = rng.random_range(0.02..0.2);
            let l = rng.random_range(0.05..0.5);
            let m = rng.random_range(0.1..10.0);
            let exact = compute_link_inertia(shape, d, l, m, 0.0).unwrap();
            let mc = monte_carlo(shape, d, l, m, &mut rng);
            for k in 0..3 {
                let rel = (mc[k] - exact[k]).abs() / exact[k];
                assert!(rel < 0.01, "{shape:?} axis {k}: mc {} vs {}", mc[k], exact[k]);
            }
        }
    }
}
