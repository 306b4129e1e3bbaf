//! Line-oriented text format for dataset splits.
//!
//! One self-describing file per split:
//!
//! ```text
//! dipa-dataset v1
//! channels 13
//! classes 12
//! class 0 class_0
//! ...                      (one `class <id> <name>` line per class)
//! samples 2
//! sample 4 3               (label, observation count)
//! 17 0.1 0.2 ... 1.3       (day, then one value per channel)
//! 63 0.0 0.7 ... 0.2
//! 199 0.4 0.1 ... 0.9
//! sample 0 1
//! 88 0.5 0.5 ... 0.5
//! ```
//!
//! Values are written with shortest-round-trip formatting, so a write/read
//! cycle reproduces every `f64` bit-exactly. Parsers reject malformed input
//! with the offending line number.

use std::fs;
use std::path::Path;

use dipa_core::data::{Dataset, SplitDataset, TimeSeriesSample};
use dipa_core::tensor::Mat;

use crate::error::{Error, Result};

const MAGIC: &str = "dipa-dataset v1";

/// File names used for the three splits inside a dataset directory.
pub const SPLIT_FILES: [&str; 3] = ["train.txt", "validation.txt", "test.txt"];

fn format_samples(out: &mut String, samples: &[TimeSeriesSample]) {
    use std::fmt::Write;
    writeln!(out, "samples {}", samples.len()).unwrap();
    for s in samples {
        writeln!(out, "sample {} {}", s.label(), s.n_t()).unwrap();
        for (t, &day) in s.days().iter().enumerate() {
            out.push_str(&day.to_string());
            for &v in s.observations().row(t) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
    }
}

/// Serialize one split to the text format.
pub fn format_split(samples: &[TimeSeriesSample], num_classes: usize, channels: usize) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "channels {channels}").unwrap();
    writeln!(out, "classes {num_classes}").unwrap();
    for c in 0..num_classes {
        writeln!(out, "class {c} class_{c}").unwrap();
    }
    format_samples(&mut out, samples);
    out
}

/// Write `train.txt`, `validation.txt`, and `test.txt` under `dir`.
pub fn save_split_dataset(split: &SplitDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, samples) in SPLIT_FILES
        .iter()
        .zip([&split.train, &split.validation, &split.test])
    {
        let path = dir.join(name);
        let text = format_split(samples, split.num_classes, split.channels);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

struct LineReader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        for (idx, line) in self.lines.by_ref() {
            if !line.trim().is_empty() {
                return Ok((idx + 1, line.trim()));
            }
        }
        Err(Error::parse(self.path, 0, "unexpected end of file"))
    }

    fn expect_kv(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (line_no, line) = self.next_line()?;
        match line.strip_prefix(key).map(str::trim) {
            Some(rest) if !rest.is_empty() => Ok((line_no, rest)),
            _ => Err(Error::parse(
                self.path,
                line_no,
                format!("expected `{key} <value>`, got `{line}`"),
            )),
        }
    }
}

fn parse_usize(path: &Path, line: usize, text: &str, what: &str) -> Result<usize> {
    text.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what}: `{text}`")))
}

/// Parse one split file.
pub fn parse_split(path: &Path, text: &str) -> Result<Dataset> {
    let mut reader = LineReader {
        path,
        lines: text.lines().enumerate(),
    };

    let (line_no, first) = reader.next_line()?;
    if first != MAGIC {
        return Err(Error::parse(
            path,
            line_no,
            format!("expected header `{MAGIC}`, got `{first}`"),
        ));
    }
    let (l, channels) = reader.expect_kv("channels")?;
    let channels = parse_usize(path, l, channels, "channel count")?;
    let (l, classes) = reader.expect_kv("classes")?;
    let num_classes = parse_usize(path, l, classes, "class count")?;
    if channels == 0 || num_classes == 0 {
        return Err(Error::parse(path, l, "channels and classes must be positive"));
    }
    for expect_id in 0..num_classes {
        let (l, rest) = reader.expect_kv("class")?;
        let mut parts = rest.split_whitespace();
        let id = parts
            .next()
            .ok_or_else(|| Error::parse(path, l, "missing class id"))?;
        let id = parse_usize(path, l, id, "class id")?;
        if id != expect_id || parts.next().is_none() {
            return Err(Error::parse(
                path,
                l,
                format!("expected `class {expect_id} <name>`"),
            ));
        }
    }

    let (l, count) = reader.expect_kv("samples")?;
    let count = parse_usize(path, l, count, "sample count")?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let (l, rest) = reader.expect_kv("sample")?;
        let mut parts = rest.split_whitespace();
        let label = parse_usize(
            path,
            l,
            parts.next().ok_or_else(|| Error::parse(path, l, "missing label"))?,
            "label",
        )?;
        let n_t = parse_usize(
            path,
            l,
            parts
                .next()
                .ok_or_else(|| Error::parse(path, l, "missing observation count"))?,
            "observation count",
        )?;
        if label >= num_classes {
            return Err(Error::parse(
                path,
                l,
                format!("label {label} out of range for {num_classes} classes"),
            ));
        }
        if n_t == 0 {
            return Err(Error::parse(path, l, "sample needs at least one observation"));
        }

        let mut days = Vec::with_capacity(n_t);
        let mut obs = Mat::zeros(n_t, channels);
        for t in 0..n_t {
            let (l, line) = reader.next_line()?;
            let mut parts = line.split_whitespace();
            let day = parse_usize(
                path,
                l,
                parts.next().ok_or_else(|| Error::parse(path, l, "missing day"))?,
                "day",
            )?;
            days.push(day);
            let row = obs.row_mut(t);
            for (c, slot) in row.iter_mut().enumerate() {
                let token = parts.next().ok_or_else(|| {
                    Error::parse(path, l, format!("expected {channels} channel values"))
                })?;
                *slot = token.parse().map_err(|_| {
                    Error::parse(path, l, format!("invalid value for channel {c}: `{token}`"))
                })?;
            }
            if parts.next().is_some() {
                return Err(Error::parse(
                    path,
                    l,
                    format!("trailing values, expected exactly {channels} channels"),
                ));
            }
        }
        samples.push(
            TimeSeriesSample::new(days, obs, label)
                .map_err(|e| Error::parse(path, l, e.to_string()))?,
        );
    }

    Ok(Dataset {
        samples,
        num_classes,
        channels,
    })
}

fn load_one(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_split(path, &text)
}

/// Load the three split files and reassemble a [`SplitDataset`]; classes
/// present in test but absent from train are recorded as test-only.
pub fn load_split_dataset(train: &Path, validation: &Path, test: &Path) -> Result<SplitDataset> {
    let train_set = load_one(train)?;
    let val_set = load_one(validation)?;
    let test_set = load_one(test)?;
    if val_set.channels != train_set.channels || test_set.channels != train_set.channels {
        return Err(Error::config("split files disagree on the channel count"));
    }
    if val_set.num_classes != train_set.num_classes
        || test_set.num_classes != train_set.num_classes
    {
        return Err(Error::config("split files disagree on the class count"));
    }

    let num_classes = train_set.num_classes;
    let train_counts = dipa_core::data::class_counts(&train_set.samples, num_classes);
    let test_counts = dipa_core::data::class_counts(&test_set.samples, num_classes);
    let test_only: Vec<usize> = (0..num_classes)
        .filter(|&c| test_counts[c] > 0 && train_counts[c] == 0)
        .collect();

    Ok(SplitDataset {
        train: train_set.samples,
        validation: val_set.samples,
        test: test_set.samples,
        test_only_classes: test_only,
        num_classes,
        channels: train_set.channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dipa_core::data::{self, GeneratorConfig};
    use dipa_core::rng::Rng;

    fn sample_set() -> SplitDataset {
        let cfg = GeneratorConfig {
            total_samples: 300,
            num_classes: 6,
            channels: 3,
            obs_count_range: (2, 5),
            test_only_classes: 1,
            seed: 21,
            ..GeneratorConfig::default()
        };
        let data = data::generate(&cfg).unwrap();
        data::split(data, (0.6, 0.2, 0.2), 1, &mut Rng::new(2)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let split = sample_set();
        let dir = tempfile::tempdir().unwrap();
        save_split_dataset(&split, dir.path()).unwrap();
        let loaded = load_split_dataset(
            &dir.path().join("train.txt"),
            &dir.path().join("validation.txt"),
            &dir.path().join("test.txt"),
        )
        .unwrap();
        assert_eq!(loaded.num_classes, split.num_classes);
        assert_eq!(loaded.channels, split.channels);
        assert_eq!(loaded.test_only_classes, split.test_only_classes);
        for (a, b) in loaded.train.iter().zip(&split.train) {
            assert_eq!(a.label(), b.label());
            assert_eq!(a.days(), b.days());
            let bits = |m: &Mat| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.observations()), bits(b.observations()));
        }
        assert_eq!(loaded.validation.len(), split.validation.len());
        assert_eq!(loaded.test.len(), split.test.len());
    }

    #[test]
    fn malformed_input_reports_line_numbers() {
        let path = Path::new("broken.txt");

        let err = parse_split(path, "nonsense\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let text = "dipa-dataset v1\nchannels 2\nclasses 1\nclass 0 a\nsamples 1\nsample 0 1\n5 0.1\n";
        let err = parse_split(path, text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");

        let text =
            "dipa-dataset v1\nchannels 1\nclasses 1\nclass 0 a\nsamples 1\nsample 3 1\n5 0.1\n";
        let err = parse_split(path, text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");

        let text = "dipa-dataset v1\nchannels 1\nclasses 1\nclass 0 a\nsamples 1\nsample 0 1\n5 zzz\n";
        let err = parse_split(path, text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
    }

    #[test]
    fn extra_channel_values_are_rejected() {
        let path = Path::new("broken.txt");
        let text =
            "dipa-dataset v1\nchannels 1\nclasses 1\nclass 0 a\nsamples 1\nsample 0 1\n5 0.1 0.2\n";
        let err = parse_split(path, text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
    }
}
