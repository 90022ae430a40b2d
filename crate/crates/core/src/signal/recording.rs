use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoreError, Result};

/// A single-channel EEG recording in microvolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: String,
    pub rate_hz: f64,
    pub samples: Vec<f64>,
    /// Seconds already removed from the front of the original recording.
    pub start_offset_s: f64,
}

impl Recording {
    pub fn new(id: impl Into<String>, rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return invalid(format!("sampling rate {rate_hz} Hz"));
        }
        if samples.is_empty() {
            return Err(CoreError::EmptyRecording);
        }
        Ok(Self {
            id: id.into(),
            rate_hz,
            samples,
            start_offset_s: 0.0,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            id: self.id.clone(),
            rate_hz: self.rate_hz,
            samples,
            start_offset_s: self.start_offset_s,
        }
    }
}

/// Drops the first `seconds` of the recording.
pub fn trim_head(rec: &Recording, seconds: f64) -> Result<Recording> {
    if !(seconds >= 0.0) {
        return invalid(format!("trim of {seconds} s"));
    }
    if seconds == 0.0 {
        return Ok(rec.clone());
    }
    if rec.duration_s() <= seconds {
        return Err(CoreError::TooShort {
            duration_s: rec.duration_s(),
            needed_s: seconds,
        });
    }
    let n = (seconds * rec.rate_hz).round() as usize;
    Ok(Recording {
        id: rec.id.clone(),
        rate_hz: rec.rate_hz,
        samples: rec.samples[n..].to_vec(),
        start_offset_s: rec.start_offset_s + seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trims_thirty_second_recording() {
        let rec = Recording::new("r", 128.0, vec![1.0; 30 * 128]).unwrap();
        let t = trim_head(&rec, 20.0).unwrap();
        assert_eq!(t.len(), 10 * 128);
        assert_eq!(t.start_offset_s, 20.0);
        assert!((t.duration_s() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_trim_is_identity() {
        let rec = Recording::new("r", 250.0, (0..100).map(f64::from).collect()).unwrap();
        assert_eq!(trim_head(&rec, 0.0).unwrap(), rec);
    }

    #[test]
    fn eight_hours_minus_twenty_seconds() {
        let rec = Recording::new("night", 250.0, vec![0.0; 8 * 3600 * 250]).unwrap();
        let t = trim_head(&rec, 20.0).unwrap();
        assert_eq!(t.len(), (8 * 3600 - 20) * 250);
    }

    #[test]
    fn too_short_is_an_error() {
        let rec = Recording::new("r", 128.0, vec![0.0; 128 * 20]).unwrap();
        assert!(matches!(trim_head(&rec, 20.0), Err(CoreError::TooShort { .. })));
    }

    #[test]
    fn rejects_empty_and_bad_rate() {
        assert!(matches!(Recording::new("r", 128.0, vec![]), Err(CoreError::EmptyRecording)));
        assert!(Recording::new("r", 0.0, vec![1.0]).is_err());
    }
}
