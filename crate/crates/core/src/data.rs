//! Samples as raw observations or frequency tables, and the embedded datasets.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Values {
    Raw(Vec<f64>),
    /// `(value, count)` with strictly increasing values.
    Table(Vec<(f64, u64)>),
}

/// A univariate sample with `n ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Values,
    n: u64,
    label: String,
}

impl Dataset {
    pub fn from_observations(obs: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(bad) = obs.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite observation {bad}")));
        }
        if obs.len() < 2 {
            return Err(Error::InvalidData(format!("need at least 2 observations, got {}", obs.len())));
        }
        Ok(Dataset {
            n: obs.len() as u64,
            values: Values::Raw(obs),
            label: label.into(),
        })
    }

    pub fn from_frequency_table(table: Vec<(f64, u64)>, label: impl Into<String>) -> Result<Self> {
        if let Some((v, _)) = table.iter().find(|(v, _)| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value {v}")));
        }
        if let Some(w) = table.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidData(format!(
                "frequency values must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        let n: u64 = table.iter().map(|(_, c)| c).sum();
        if n < 2 {
            return Err(Error::InvalidData(format!("need a total count of at least 2, got {n}")));
        }
        Ok(Dataset {
            values: Values::Table(table),
            n,
            label: label.into(),
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_table(&self) -> bool {
        matches!(self.values, Values::Table(_))
    }

    /// Distinct values in increasing order with their multiplicities.
    pub fn sorted_counts(&self) -> Vec<(f64, u64)> {
        match &self.values {
            Values::Table(t) => t.iter().copied().filter(|(_, c)| *c > 0).collect(),
            Values::Raw(obs) => {
                let mut sorted = obs.clone();
                sorted.sort_by(f64::total_cmp);
                let mut out: Vec<(f64, u64)> = Vec::new();
                for x in sorted {
                    match out.last_mut() {
                        Some((v, c)) if *v == x => *c += 1,
                        _ => out.push((x, 1)),
                    }
                }
                out
            }
        }
    }

    /// Observations in stored order (frequency tables expand in value order).
    pub fn expand(&self) -> Vec<f64> {
        match &self.values {
            Values::Raw(obs) => obs.clone(),
            Values::Table(t) => t
                .iter()
                .flat_map(|&(v, c)| std::iter::repeat_n(v, c as usize))
                .collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.sorted_counts()[0].0
    }

    pub fn max(&self) -> f64 {
        self.sorted_counts().last().unwrap().0
    }

    pub fn mean(&self) -> f64 {
        let n = self.n as f64;
        self.sorted_counts().iter().map(|&(v, c)| v * c as f64).sum::<f64>() / n
    }

    /// Sample variance with divisor `n − 1`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.n as f64;
        self.sorted_counts()
            .iter()
            .map(|&(v, c)| c as f64 * (v - m) * (v - m))
            .sum::<f64>()
            / (n - 1.0)
    }
}

const COPPER: &str = "\
2.20  2.20  2.40  2.40  2.50  2.70  2.80  2.90
3.03  3.03  3.10  3.37  3.40  3.40  3.40  3.50
3.60  3.70  3.70  3.70  3.70  3.77  5.28 28.95
";
const COPPER_SHA256: &str = "83a135848566f4dff37252fb71f5a64fcf7b737914a16ddff0abaffd4e45bd11";

const POLONIUM: &str = "\
counts  0   1   2   3   4   5   6   7  8  9 10 11 12 13 14
frequency 57 203 383 525 532 408 273 139 45 27 10  4  0  1  1
";
const POLONIUM_SHA256: &str = "e77f5d2f2bee52c586f5bf6629d0be99bcc87534f075252f317ac21cf6a7ce1d";

pub const EMBEDDED: [&str; 2] = ["copper", "polonium"];

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn verified(name: &str, text: &'static str, pinned: &str) -> Result<&'static str> {
    if sha256_hex(text) != pinned {
        return Err(Error::InvalidData(format!("embedded dataset {name} fails its checksum")));
    }
    Ok(text)
}

/// Copper in wholemeal flour (ppm), 24 measurements.
pub fn copper() -> Dataset {
    let text = verified("copper", COPPER, COPPER_SHA256).expect("pinned copper data");
    let obs = text.split_whitespace().map(|t| t.parse().unwrap()).collect();
    Dataset::from_observations(obs, "copper").unwrap()
}

/// Polonium decay counts per interval as a frequency table (n = 2608).
pub fn polonium() -> Dataset {
    let text = verified("polonium", POLONIUM, POLONIUM_SHA256).expect("pinned polonium data");
    let mut lines = text.lines();
    let counts = lines.next().unwrap().split_whitespace().skip(1);
    let freqs = lines.next().unwrap().split_whitespace().skip(1);
    let table = counts
        .zip(freqs)
        .map(|(v, c)| (v.parse().unwrap(), c.parse().unwrap()))
        .collect();
    Dataset::from_frequency_table(table, "polonium").unwrap()
}

/// Embedded dataset by name.
pub fn embedded(name: &str) -> Result<Dataset> {
    match name {
        "copper" => Ok(copper()),
        "polonium" => Ok(polonium()),
        _ => Err(Error::InvalidData(format!(
            "unknown embedded dataset '{name}' (available: {})",
            EMBEDDED.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copper_listing() {
        let d = copper();
        assert_eq!(d.n(), 24);
        assert_eq!(d.max(), 28.95);
        assert_eq!(d.min(), 2.2);
        assert!(!d.is_table());
    }

    #[test]
    fn polonium_listing() {
        let d = polonium();
        assert_eq!(d.n(), 2608);
        assert!(d.is_table());
        let counts = d.sorted_counts();
        assert!(counts.contains(&(13.0, 1)));
        // zero-count row at 12 is kept in the table but not in the support
        assert!(!counts.iter().any(|&(v, _)| v == 12.0));
        assert_eq!(d.expand().len(), 2608);
    }

    #[test]
    fn checksums_pin_the_text() {
        assert_eq!(sha256_hex(COPPER), COPPER_SHA256);
        assert_eq!(sha256_hex(POLONIUM), POLONIUM_SHA256);
        let edited = COPPER.replace("28.95", "28.96");
        assert_ne!(sha256_hex(&edited), COPPER_SHA256);
    }

    #[test]
    fn validation() {
        assert!(Dataset::from_observations(vec![1.0], "x").is_err());
        assert!(Dataset::from_observations(vec![1.0, f64::NAN], "x").is_err());
        assert!(Dataset::from_frequency_table(vec![(1.0, 3), (1.0, 2)], "x").is_err());
        assert!(Dataset::from_frequency_table(vec![(1.0, 1)], "x").is_err());
        assert!(embedded("nope").is_err());
    }

    #[test]
    fn table_and_raw_agree() {
        let t = Dataset::from_frequency_table(vec![(0.0, 2), (1.0, 3), (4.0, 1)], "t").unwrap();
        let r = Dataset::from_observations(vec![4.0, 1.0, 0.0, 1.0, 0.0, 1.0], "r").unwrap();
        assert_eq!(t.sorted_counts(), r.sorted_counts());
        assert_eq!(t.mean(), r.mean());
        assert_eq!(t.expand(), vec![0.0, 0.0, 1.0, 1.0, 1.0, 4.0]);
    }
}
