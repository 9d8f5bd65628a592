use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REFERENCE_CSV: &str = include_str!("../../assets/reference_devices.v1.csv");

/// How an advertised peak is derived from per-cycle throughput.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakBasis {
    pub flops_per_cycle: f64,
    pub cores: u32,
    pub clock_ghz: f64,
}

impl PeakBasis {
    pub fn tflops(&self) -> f64 {
        self.flops_per_cycle * self.cores as f64 * self.clock_ghz * 1e9 / 1e12
    }
}

/// Matrix size to achieved throughput and power of a measured device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub size: usize,
    pub tflops: f64,
    pub watts: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceDevice {
    pub name: String,
    pub precision: String,
    pub peak_tflops: f64,
    pub basis: Option<PeakBasis>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Deserialize)]
struct Record {
    device: String,
    precision: String,
    kind: String,
    size: Option<usize>,
    tflops: f64,
    watts: Option<f64>,
    flops_per_cycle: Option<f64>,
    cores: Option<u32>,
    clock_ghz: Option<f64>,
}

impl ReferenceDevice {
    /// Devices of the bundled asset.
    pub fn builtin() -> Vec<Self> {
        Self::from_csv(REFERENCE_CSV).expect("bundled reference asset parses")
    }

    pub fn from_csv(text: &str) -> Result<Vec<Self>> {
        let mut devices: Vec<Self> = Vec::new();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for rec in reader.deserialize::<Record>() {
            let rec = rec.map_err(|e| Error::Parse(format!("reference devices: {e}")))?;
            let idx = match devices.iter().position(|d| d.name == rec.device) {
                Some(i) => i,
                None => {
                    devices.push(Self {
                        name: rec.device.clone(),
                        precision: rec.precision.clone(),
                        peak_tflops: 0.0,
                        basis: None,
                        curve: Vec::new(),
                    });
                    devices.len() - 1
                }
            };
            let d = &mut devices[idx];
            match rec.kind.as_str() {
                "peak" => {
                    d.peak_tflops = rec.tflops;
                    if let (Some(flops_per_cycle), Some(cores), Some(clock_ghz)) =
                        (rec.flops_per_cycle, rec.cores, rec.clock_ghz)
                    {
                        d.basis = Some(PeakBasis { flops_per_cycle, cores, clock_ghz });
                    }
                }
                "measured" => {
                    let size =
                        rec.size.ok_or_else(|| Error::Parse(format!("measured row of {} lacks a size", rec.device)))?;
                    d.curve.push(CurvePoint { size, tflops: rec.tflops, watts: rec.watts });
                }
                other => return Err(Error::Parse(format!("unknown reference row kind {other:?}"))),
            }
        }
        Ok(devices)
    }
}

/// One simulated measurement to place beside the references.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedResult {
    pub label: String,
    pub size: usize,
    pub tflops: f64,
    pub tflops_per_watt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub device: String,
    pub kind: &'static str,
    pub size: Option<usize>,
    pub tflops: f64,
    pub tflops_per_watt: Option<f64>,
}

/// Simulated rows first, then each reference's peak and measured curve.
pub fn compare_devices(results: &[SimulatedResult], references: &[ReferenceDevice]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = results
        .iter()
        .map(|r| ComparisonRow {
            device: r.label.clone(),
            kind: "simulated",
            size: Some(r.size),
            tflops: r.tflops,
            tflops_per_watt: Some(r.tflops_per_watt),
        })
        .collect();
    for d in references {
        rows.push(ComparisonRow {
            device: d.name.clone(),
            kind: "peak",
            size: None,
            tflops: d.peak_tflops,
            tflops_per_watt: None,
        });
        rows.extend(d.curve.iter().map(|p| ComparisonRow {
            device: d.name.clone(),
            kind: "measured",
            size: Some(p.size),
            tflops: p.tflops,
            tflops_per_watt: p.watts.map(|w| p.tflops / w),
        }));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_peaks() {
        let refs = ReferenceDevice::builtin();
        assert_eq!(refs.len(), 3);
        let a100 = refs.iter().find(|d| d.name.contains("A100")).unwrap();
        assert_eq!(a100.peak_tflops, 312.0);
        let v100 = refs.iter().find(|d| d.name.contains("V100S")).unwrap();
        assert_eq!((v100.peak_tflops, v100.precision.as_str()), (32.0, "fp16"));
        let spr = refs.iter().find(|d| d.name.contains("Sapphire")).unwrap();
        assert_eq!(spr.peak_tflops, 229.0);
        assert_eq!(spr.basis.unwrap().tflops().floor(), 229.0);
    }

    #[test]
    fn empty_references() {
        let sim = SimulatedResult { label: "sim".into(), size: 2048, tflops: 40.0, tflops_per_watt: 1.5 };
        let rows = compare_devices(std::slice::from_ref(&sim), &[]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].kind, "simulated");
    }

    #[test]
    fn measured_rows() {
        let csv = "device,precision,kind,size,tflops,watts,flops_per_cycle,cores,clock_ghz\n\
                   X,bf16,peak,,10,,,,\nX,bf16,measured,1024,5,50,,,\n";
        let refs = ReferenceDevice::from_csv(csv).unwrap();
        let rows = compare_devices(&[], &refs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].tflops_per_watt, Some(0.1));
        assert!(ReferenceDevice::from_csv(
            "device,precision,kind,size,tflops,watts,flops_per_cycle,cores,clock_ghz\nX,bf16,guess,,1,,,,\n"
        )
        .is_err());
    }
}
