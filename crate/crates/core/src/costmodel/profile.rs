use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::calibrate::{calibrate, CalibrationTargets};
use crate::error::{Error, Result};
use crate::fidelity::FidelityLevel;
use crate::formats::{DataFormat, FormatKind};

/// Compute-cycle multipliers relative to a 16-bit tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatFactors {
    pub fp32: f64,
    pub bf16: f64,
    /// Shared by all block formats (unpack cost).
    pub bfp: f64,
}

impl FormatFactors {
    pub fn of(&self, fmt: DataFormat) -> f64 {
        match fmt.kind {
            FormatKind::Fp32 => self.fp32,
            FormatKind::Bf16 => self.bf16,
            FormatKind::Bfp16 | FormatKind::Bfp8 | FormatKind::Bfp4 => self.bfp,
        }
    }
}

/// Row-major to tile conversion time of one tensor: `fixed + per_element * n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TilingModel {
    pub fixed_us: f64,
    pub ns_per_element: f64,
}

/// Average board power: `idle + per_core * active + per_gbps * dram GB/s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub idle_watts: f64,
    pub watts_per_core: f64,
    pub watts_per_gbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub total_cores: usize,
    /// Core count the advertised peak refers to.
    pub reference_cores: usize,
    pub clock_hz: f64,
    pub peak_tflops_bf16: f64,
    pub dram_gb: f64,
    pub dram_bw_gbps: f64,
    pub noc_bw_gbps: f64,
    pub l1_bw_gbps_per_core: f64,
    pub l1_bytes_per_core: u64,
    pub usable_l1_bytes: u64,
    pub n_dram_banks: usize,
    pub pcie_bw_gbps: f64,
    pub compile_ms_tiling: f64,
    pub compile_ms_matmul: f64,
    pub cycles_per_tile_phase: f64,
    pub format_factors: FormatFactors,
    /// Fixed on-device cost of starting a kernel.
    pub launch_latency_us: f64,
    /// Host-side cost of enqueueing a kernel.
    pub dispatch_us: f64,
    pub tiling: TilingModel,
    pub power: PowerModel,
}

impl DeviceProfile {
    /// Hardware constants of a 96-core Grayskull e75 card with the fitted
    /// fields at neutral starting values.
    pub fn base() -> Self {
        Self {
            name: "grayskull-e75".into(),
            total_cores: 96,
            reference_cores: 64,
            clock_hz: 1.0e9,
            peak_tflops_bf16: 55.0,
            dram_gb: 8.0,
            dram_bw_gbps: 102.4,
            noc_bw_gbps: 256.0,
            l1_bw_gbps_per_core: 64.0,
            l1_bytes_per_core: 1 << 20,
            usable_l1_bytes: 512 << 10,
            n_dram_banks: 8,
            pcie_bw_gbps: 1.0,
            compile_ms_tiling: 296.0,
            compile_ms_matmul: 620.0,
            cycles_per_tile_phase: 32.0,
            format_factors: FormatFactors { fp32: 2.0, bf16: 1.0, bfp: 1.0 },
            launch_latency_us: 55.0,
            dispatch_us: 0.0,
            tiling: TilingModel { fixed_us: 0.0, ns_per_element: 0.0 },
            power: PowerModel { idle_watts: 12.0, watts_per_core: 0.2, watts_per_gbps: 0.05 },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // a calibration document carries the profile under "profile"
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let value = match value.get("profile") {
            Some(p) => p.clone(),
            None => value,
        };
        let p: Self = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("clock_hz", self.clock_hz),
            ("peak_tflops_bf16", self.peak_tflops_bf16),
            ("dram_gb", self.dram_gb),
            ("dram_bw_gbps", self.dram_bw_gbps),
            ("noc_bw_gbps", self.noc_bw_gbps),
            ("l1_bw_gbps_per_core", self.l1_bw_gbps_per_core),
            ("pcie_bw_gbps", self.pcie_bw_gbps),
            ("cycles_per_tile_phase", self.cycles_per_tile_phase),
            ("format_factors.fp32", self.format_factors.fp32),
            ("format_factors.bf16", self.format_factors.bf16),
            ("format_factors.bfp", self.format_factors.bfp),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("profile field {name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("compile_ms_tiling", self.compile_ms_tiling),
            ("compile_ms_matmul", self.compile_ms_matmul),
            ("launch_latency_us", self.launch_latency_us),
            ("dispatch_us", self.dispatch_us),
            ("tiling.fixed_us", self.tiling.fixed_us),
            ("tiling.ns_per_element", self.tiling.ns_per_element),
            ("power.idle_watts", self.power.idle_watts),
            ("power.watts_per_core", self.power.watts_per_core),
            ("power.watts_per_gbps", self.power.watts_per_gbps),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("profile field {name} must be non-negative, got {v}")));
            }
        }
        if self.total_cores == 0 || self.reference_cores == 0 || self.n_dram_banks == 0 {
            return Err(Error::Config("core and bank counts must be positive".into()));
        }
        if self.usable_l1_bytes == 0 || self.usable_l1_bytes > self.l1_bytes_per_core {
            return Err(Error::Config("usable L1 must be positive and within the L1 size".into()));
        }
        Ok(())
    }

    /// Advertised peak scaled to `(fmt, fidelity)`. The 16-bit peak is taken
    /// at HiFi2.
    pub fn peak_tflops(&self, fmt: DataFormat, fidelity: FidelityLevel) -> f64 {
        self.peak_tflops_bf16 * 2.0 / fidelity.phases() as f64 / self.format_factors.of(fmt)
    }

    /// Peak for a grid of `cores`; grids larger than the reference count
    /// scale it up.
    pub fn grid_peak_tflops(&self, fmt: DataFormat, fidelity: FidelityLevel, cores: usize) -> f64 {
        self.peak_tflops(fmt, fidelity) * (cores as f64 / self.reference_cores as f64).max(1.0)
    }
}

impl Default for DeviceProfile {
    /// The base profile calibrated against the published targets.
    fn default() -> Self {
        static CALIBRATED: OnceLock<DeviceProfile> = OnceLock::new();
        CALIBRATED.get_or_init(|| calibrate(&CalibrationTargets::published(), &DeviceProfile::base()).profile).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let p = DeviceProfile::default();
        assert_eq!(DeviceProfile::from_json(&p.to_json()).unwrap(), p);
        let wrapped = format!("{{\"profile\": {}}}", p.to_json());
        assert_eq!(DeviceProfile::from_json(&wrapped).unwrap(), p);
        assert!(DeviceProfile::from_json("").is_err());
    }

    #[test]
    fn validation() {
        let mut p = DeviceProfile::base();
        assert!(p.validate().is_ok());
        p.dram_bw_gbps = 0.0;
        assert!(p.validate().is_err());
        let mut p = DeviceProfile::base();
        p.usable_l1_bytes = 2 << 20;
        assert!(p.validate().is_err());
    }

    #[test]
    fn peaks() {
        let p = DeviceProfile::base();
        assert_eq!(p.peak_tflops(DataFormat::BF16, FidelityLevel::HiFi2), 55.0);
        assert_eq!(p.peak_tflops(DataFormat::BF16, FidelityLevel::HiFi4), 27.5);
        assert_eq!(p.peak_tflops(DataFormat::FP32, FidelityLevel::HiFi4), 13.75);
        assert_eq!(p.grid_peak_tflops(DataFormat::BF16, FidelityLevel::HiFi2, 96), 82.5);
        assert_eq!(p.grid_peak_tflops(DataFormat::BF16, FidelityLevel::HiFi2, 4), 55.0);
    }
}
