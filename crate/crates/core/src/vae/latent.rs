use super::{Result, VaeError};
use serde::{Deserialize, Serialize};

/// Default cap on the number of points `latent_grid` may produce.
pub const DEFAULT_LATENT_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSample {
    pub z: Vec<f64>,
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Standard normal quantile `Phi^-1(p)` for `p` in (0, 1).
///
/// Wichura's algorithm AS 241 (PPND16): rational approximations on three
/// ranges with relative error about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.043_131_979_763_736_4e-15,
    ];

    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Cartesian grid of latent points for visualizing the decoder.
///
/// Each dimension takes the values `normal_quantile(u)` for `k` evenly
/// spaced `u` from `a` to `b`. Points are listed in lexicographic order of
/// their index tuples with the last dimension varying fastest.
pub fn latent_grid(d: usize, k: usize, a: f64, b: f64, budget: usize) -> Result<Vec<LatentSample>> {
    if d == 0 || k < 2 {
        return Err(VaeError::InvalidConfig(format!("need d >= 1 and k >= 2, got d = {d}, k = {k}")));
    }
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(VaeError::InvalidConfig(format!("need 0 < a < b < 1, got a = {a}, b = {b}")));
    }
    let requested = (k as f64).powi(d as i32);
    if requested > budget as f64 {
        return Err(VaeError::BudgetExceeded { requested, budget });
    }
    let values: Vec<f64> = (0..k)
        .map(|i| {
            let u = (a * (k - 1 - i) as f64 + b * i as f64) / (k - 1) as f64;
            normal_quantile(u)
        })
        .collect();
    let total = requested as usize;
    Ok((0..total)
        .map(|flat| {
            let mut z = vec![0.0; d];
            let mut rest = flat;
            for j in (0..d).rev() {
                z[j] = values[rest % k];
                rest /= k;
            }
            LatentSample { z }
        })
        .collect())
}

/// Index tuple of grid point `flat`, matching [`latent_grid`]'s order.
pub fn latent_index(flat: usize, d: usize, k: usize) -> Vec<usize> {
    let mut idx = vec![0; d];
    let mut rest = flat;
    for j in (0..d).rev() {
        idx[j] = rest % k;
        rest /= k;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_golden_values() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.1) + 1.281_551_565_544_600_5).abs() < 1e-12);
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
        assert!(normal_quantile(0.0).is_infinite() && normal_quantile(1.5).is_nan());
    }

    #[test]
    fn grid_order_and_count() {
        let g = latent_grid(2, 3, 0.1, 0.9, DEFAULT_LATENT_BUDGET).unwrap();
        assert_eq!(g.len(), 9);
        let q = normal_quantile(0.9);
        assert!((g[1].z[0] + q).abs() < 1e-15 && g[1].z[1] == 0.0);
        assert!((g[3].z[0]).abs() == 0.0 && (g[3].z[1] + q).abs() < 1e-15);
        assert_eq!(latent_index(5, 2, 3), vec![1, 2]);
    }

    #[test]
    fn middle_is_zero_and_grid_symmetric() {
        let g = latent_grid(1, 3, 0.1, 0.9, 10).unwrap();
        assert_eq!(g[1].z, vec![0.0]);
        let g = latent_grid(2, 4, 0.05, 0.95, 100).unwrap();
        let n = g.len();
        for i in 0..n {
            for j in 0..2 {
                assert!((g[i].z[j] + g[n - 1 - i].z[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn budget_and_bounds() {
        assert!(matches!(latent_grid(3, 20, 0.1, 0.9, 4096), Err(VaeError::BudgetExceeded { .. })));
        assert!(latent_grid(2, 3, 0.9, 0.1, 100).is_err());
        assert!(latent_grid(2, 1, 0.1, 0.9, 100).is_err());
        assert!(latent_grid(0, 3, 0.1, 0.9, 100).is_err());
    }
}
