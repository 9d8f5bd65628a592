use gridmm::costmodel::DeviceProfile;
use gridmm::fidelity::fidelity_multiply;
use gridmm::formats::{quantize_matrix, quantize_matrix_with, Rounding};
use gridmm::layout::{tilize, untilize};
use gridmm::oracle::{matmul_reference, quantize_ref, round_ref};
use gridmm::simengine::{matmul_sim_matrices, NamedConfig};
use gridmm::{CoreGrid, DataFormat, FidelityLevel, Matrix, TileSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }

    fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Rounding used by the quantizer under test; anything but nearest-even
    /// must be caught.
    pub rounding: Rounding,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { sizes: vec![64, 256], seed: 0, rounding: Rounding::NearestEven }
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Every numeric self-check, in a fixed order.
pub fn verify(opts: &VerifyOptions, profile: &DeviceProfile) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();
    for &n in &opts.sizes {
        let a = gaussian(n, n, &mut rng);
        let b = gaussian(n, n, &mut rng);
        checks.push(oracle_check(&a, &b, profile));
        checks.push(error_order_check(&a, &b, profile));
        let back = untilize(&tilize(&a, TileSpec::default()));
        checks.push(Check::new(format!("tilize_round_trip@{n}"), back.as_ref() == Ok(&a), format!("{n}x{n}")));
    }
    let odd = Matrix::from_fn(37, 53, |_, _| {
        let m: f64 = StandardNormal.sample(&mut rng);
        m * 2f64.powi(rng.random_range(-20..20))
    });
    for fmt in DataFormat::ALL {
        checks.push(quantize_check(&odd, fmt, opts.rounding));
    }
    for fmt in [DataFormat::FP32, DataFormat::BF16] {
        checks.push(fidelity_check(fmt, &mut rng));
    }
    checks
}

fn oracle_check(a: &Matrix, b: &Matrix, profile: &DeviceProfile) -> Check {
    let name = format!("oracle_fp32_hifi4@{}", a.rows());
    let run = || -> gridmm::Result<u64> {
        let cfg = NamedConfig::TABLE[0].interleaved(CoreGrid { x: 8, y: 8 });
        let (got, _) = matmul_sim_matrices(a, b, &cfg, profile)?;
        let qa = quantize_matrix(a, DataFormat::FP32)?;
        let qb = quantize_matrix(b, DataFormat::FP32)?;
        let want = matmul_reference(&qa, &qb)?.map(|v| round_ref(v, DataFormat::FP32));
        got.max_ulp_distance(&want)
    };
    match run() {
        Ok(ulps) => Check::new(name, ulps <= 1, format!("max {ulps} ulp")),
        Err(e) => Check::failed(name, e),
    }
}

fn error_order_check(a: &Matrix, b: &Matrix, profile: &DeviceProfile) -> Check {
    let name = format!("config_error_order@{}", a.rows());
    let run = || -> gridmm::Result<Vec<f64>> {
        let exact = matmul_reference(a, b)?;
        NamedConfig::TABLE
            .iter()
            .map(|c| matmul_sim_matrices(a, b, &c.interleaved(CoreGrid::SINGLE), profile)?.0.frobenius_distance(&exact))
            .collect()
    };
    match run() {
        Ok(errs) => {
            let detail = errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ");
            Check::new(name, errs.windows(2).all(|w| w[0] <= w[1]), detail)
        }
        Err(e) => Check::failed(name, e),
    }
}

fn quantize_check(m: &Matrix, fmt: DataFormat, rounding: Rounding) -> Check {
    let name = format!("quantize_round_trip@{fmt}");
    let run = || -> gridmm::Result<(bool, bool)> {
        let (q, _) = quantize_matrix_with(m, fmt, rounding)?;
        let (again, _) = quantize_matrix_with(&q, fmt, rounding)?;
        Ok((q == quantize_ref(m, fmt), again == q))
    };
    match run() {
        Ok((matches_ref, idempotent)) => Check::new(
            name,
            matches_ref && idempotent,
            format!("matches reference: {matches_ref}, idempotent: {idempotent}"),
        ),
        Err(e) => Check::failed(name, e),
    }
}

/// HiFi4 is exact and dropping phases never lowers the mean error on
/// positive operands.
fn fidelity_check(fmt: DataFormat, rng: &mut ChaCha8Rng) -> Check {
    let name = format!("fidelity_ladder@{fmt}");
    let pairs: Vec<(f64, f64)> = (0..10_000)
        .map(|_| (round_ref(rng.random_range(0.01..100.0), fmt), round_ref(rng.random_range(0.01..100.0), fmt)))
        .collect();
    let mut means = Vec::new();
    for level in FidelityLevel::ALL {
        let mut total = 0.0;
        for &(x, y) in &pairs {
            match fidelity_multiply(x, y, fmt, level) {
                Ok(p) => total += (p - x * y).abs(),
                Err(e) => return Check::failed(name, e),
            }
        }
        means.push(total / pairs.len() as f64);
    }
    let pass = means.windows(2).all(|w| w[0] >= w[1]) && means[3] == 0.0;
    Check::new(name, pass, means.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> VerifyOptions {
        VerifyOptions { sizes: vec![32], ..Default::default() }
    }

    #[test]
    fn default_checks_pass() {
        let checks = verify(&opts(), &DeviceProfile::default());
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn truncating_quantizer_is_caught() {
        let checks = verify(&VerifyOptions { rounding: Rounding::TowardZero, ..opts() }, &DeviceProfile::default());
        let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"quantize_round_trip@bf16"), "{failed:?}");
        assert!(failed.iter().all(|n| n.starts_with("quantize_round_trip")));
    }
}
