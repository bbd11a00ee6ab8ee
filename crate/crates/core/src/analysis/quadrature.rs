//! Globally adaptive 15-point Gauss–Kronrod quadrature on a piecewise-smooth
//! integrand. Callers pass the breakpoints where the integrand's formula
//! changes so every panel sees a smooth function.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_PANELS: usize = 2000;

#[derive(Debug, Clone, Copy)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct Integral {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, starting from one panel
/// per breakpoint interval and bisecting the worst panel until the summed
/// error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub(crate) fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    debug_assert!(breaks.len() >= 2);
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gauss_kronrod(&f, w[0], w[1]))
        .collect();

    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let tol = abs_tol.max(rel_tol * value.abs());
        if error <= tol {
            return Ok(Integral { value, error });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("at least one panel");
        let p = panels[worst];
        let mid = 0.5 * (p.lo + p.hi);
        if panels.len() >= MAX_PANELS || !(mid > p.lo && mid < p.hi) {
            return Err(Error::QuadratureNotConverged {
                achieved: error,
                requested: tol,
            });
        }
        panels[worst] = gauss_kronrod(&f, p.lo, mid);
        panels.push(gauss_kronrod(&f, mid, p.hi));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let r = integrate(|x| 3.0 * x * x + 1.0, &[0.0, 2.0], 1e-14, 0.0).unwrap();
        assert!((r.value - 10.0).abs() < 1e-13);
        assert!(r.error <= 1e-14);
    }

    #[test]
    fn integrates_gaussian_moments() {
        let phi = crate::math::std_normal_pdf;
        let m0 = integrate(phi, &[-10.0, 10.0], 1e-13, 0.0).unwrap().value;
        let m2 = integrate(|z| z * z * phi(z), &[-10.0, 10.0], 1e-13, 0.0)
            .unwrap()
            .value;
        let m4 = integrate(|z| z.powi(4) * phi(z), &[-10.0, 0.0, 10.0], 1e-13, 0.0)
            .unwrap()
            .value;
        assert!((m0 - 1.0).abs() < 1e-13);
        assert!((m2 - 1.0).abs() < 1e-13);
        assert!((m4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn handles_kinks_at_breakpoints() {
        let r = integrate(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], 1e-14, 0.0).unwrap();
        assert!((r.value - 2.5).abs() < 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| 1.0 / x.abs().sqrt(), &[-1.0, 1.0], 1e-300, 0.0);
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }
}
