//! Text formats: basis collections, observation vectors and instance records.
//!
//! Basis file: a header line `D d N`, then `N·D` rows of `d` values, basis by
//! basis. Values are written with 17 significant digits, which round-trips
//! every `f64`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::collection::SubspaceCollection;
use crate::error::{MsdError, Result};
use crate::linalg::BasisMatrix;
use crate::model::{ActivityPattern, MixingCoefficients, NoiseSpec, UnmixingInstance};

fn parse_err(line: usize, message: impl Into<String>) -> MsdError {
    MsdError::Parse { line, message: message.into() }
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_values(line_no: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("not a number: {tok:?}")))
        })
        .collect()
}

pub fn write_collection<W: Write>(collection: &SubspaceCollection, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{} {} {}",
        collection.ambient_dim(),
        collection.subspace_dim(),
        collection.len()
    )?;
    let mut row = String::new();
    for basis in collection.bases() {
        let m = basis.matrix();
        for r in 0..m.nrows() {
            row.clear();
            for c in 0..m.ncols() {
                if c > 0 {
                    row.push(' ');
                }
                row.push_str(&fmt_f64(m[(r, c)]));
            }
            writeln!(out, "{row}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_collection<R: BufRead>(reader: R) -> Result<SubspaceCollection> {
    let lines = content_lines(reader)?;
    let (header_no, header) = lines.first().ok_or_else(|| parse_err(1, "empty basis file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(*header_no, "header must be `D d N`")))
        .collect::<Result<_>>()?;
    let [ambient, sub, count] = dims[..] else {
        return Err(parse_err(*header_no, "header must be `D d N`"));
    };
    let body = &lines[1..];
    if body.len() != ambient * count {
        return Err(parse_err(
            *header_no,
            format!("expected {} rows, found {}", ambient * count, body.len()),
        ));
    }
    let mut bases = Vec::with_capacity(count);
    for chunk in body.chunks(ambient.max(1)) {
        let mut m = DMatrix::<f64>::zeros(ambient, sub);
        for (r, (line_no, text)) in chunk.iter().enumerate() {
            let values = parse_values(*line_no, text)?;
            if values.len() != sub {
                return Err(parse_err(*line_no, format!("expected {sub} values, found {}", values.len())));
            }
            for (c, v) in values.into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        bases.push(BasisMatrix::new(m)?);
    }
    SubspaceCollection::new(bases)
}

/// Whitespace- or newline-separated values; `#` lines are ignored.
pub fn read_vector<R: BufRead>(reader: R) -> Result<DVector<f64>> {
    let mut values = Vec::new();
    for (line_no, text) in content_lines(reader)? {
        values.extend(parse_values(line_no, &text)?);
    }
    if values.is_empty() {
        return Err(parse_err(1, "no values found"));
    }
    Ok(DVector::from_vec(values))
}

pub fn write_vector<W: Write>(v: &DVector<f64>, mut out: W) -> Result<()> {
    for x in v.iter() {
        writeln!(out, "{}", fmt_f64(*x))?;
    }
    out.flush()?;
    Ok(())
}

/// The serialized form of an unmixing instance. Indices are 1-based on disk
/// and 0-based here.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub pattern: Vec<usize>,
    pub energies: Vec<f64>,
    pub thetas: Vec<DVector<f64>>,
    pub noise: NoiseSpec,
    pub observation: DVector<f64>,
}

impl From<&UnmixingInstance> for InstanceRecord {
    fn from(inst: &UnmixingInstance) -> Self {
        Self {
            pattern: inst.pattern.indices().to_vec(),
            energies: inst.coefficients.energies().to_vec(),
            thetas: inst.coefficients.thetas().to_vec(),
            noise: inst.noise,
            observation: inst.observation.clone(),
        }
    }
}

impl InstanceRecord {
    /// Active pattern over a collection of `total` subspaces.
    pub fn activity_pattern(&self, total: usize) -> Result<ActivityPattern> {
        ActivityPattern::new(self.pattern.clone(), total)
    }

    pub fn coefficients(&self) -> Result<MixingCoefficients> {
        MixingCoefficients::fixed(self.thetas.clone())
    }

    pub fn energy_total(&self) -> f64 {
        self.energies.iter().sum()
    }

    pub fn to_text(&self) -> String {
        let join = |vals: &mut dyn Iterator<Item = String>| vals.collect::<Vec<_>>().join(" ");
        let mut out = String::from("# unmixing instance\n");
        let _ = writeln!(out, "pattern {}", join(&mut self.pattern.iter().map(|i| (i + 1).to_string())));
        let _ = writeln!(out, "energies {}", join(&mut self.energies.iter().map(|&e| fmt_f64(e))));
        for theta in &self.thetas {
            let _ = writeln!(out, "theta {}", join(&mut theta.iter().map(|&v| fmt_f64(v))));
        }
        match self.noise {
            NoiseSpec::Gaussian { sigma } => {
                let _ = writeln!(out, "noise gaussian {}", fmt_f64(sigma));
            }
            NoiseSpec::Bounded { epsilon } => {
                let _ = writeln!(out, "noise bounded {}", fmt_f64(epsilon));
            }
        }
        let _ = writeln!(out, "y {}", join(&mut self.observation.iter().map(|&v| fmt_f64(v))));
        out
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut pattern = None;
        let mut energies = None;
        let mut thetas = Vec::new();
        let mut noise = None;
        let mut observation = None;
        let mut last_line = 0;
        for (line_no, text) in content_lines(reader)? {
            last_line = line_no;
            let (key, rest) = text.split_once(char::is_whitespace).unwrap_or((text.as_str(), ""));
            match key {
                "pattern" => {
                    let idx = rest
                        .split_whitespace()
                        .map(|t| match t.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(parse_err(line_no, format!("bad 1-based index {t:?}"))),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    pattern = Some(idx);
                }
                "energies" => energies = Some(parse_values(line_no, rest)?),
                "theta" => thetas.push(DVector::from_vec(parse_values(line_no, rest)?)),
                "noise" => {
                    let (kind, level) = rest.trim().split_once(char::is_whitespace).ok_or_else(|| {
                        parse_err(line_no, "expected `noise gaussian <sigma>` or `noise bounded <epsilon>`")
                    })?;
                    let level = level
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(line_no, "bad noise level"))?;
                    noise = Some(match kind {
                        "gaussian" => NoiseSpec::Gaussian { sigma: level },
                        "bounded" => NoiseSpec::Bounded { epsilon: level },
                        other => return Err(parse_err(line_no, format!("unknown noise kind {other:?}"))),
                    });
                }
                "y" => observation = Some(DVector::from_vec(parse_values(line_no, rest)?)),
                other => return Err(parse_err(line_no, format!("unknown key {other:?}"))),
            }
        }
        let missing = |what: &str| parse_err(last_line, format!("missing `{what}` line"));
        let record = Self {
            pattern: pattern.ok_or_else(|| missing("pattern"))?,
            energies: energies.ok_or_else(|| missing("energies"))?,
            thetas,
            noise: noise.ok_or_else(|| missing("noise"))?,
            observation: observation.ok_or_else(|| missing("y"))?,
        };
        if record.energies.len() != record.pattern.len() || record.thetas.len() != record.pattern.len() {
            return Err(parse_err(last_line, "pattern, energies and theta counts differ"));
        }
        Ok(record)
    }

    /// Whether a text starts like an instance record rather than a bare vector.
    pub fn looks_like_record(text: &str) -> bool {
        text.lines().any(|l| l.trim_start().starts_with("pattern"))
    }
}
