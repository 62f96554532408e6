//! Genotype call encoding and per-SNP positional codes.
//!
//! A call is one IUPAC letter. Homozygous calls map to a one-hot 4-vector
//! over (A, C, G, T); heterozygous calls split the mass 0.5/0.5 over the
//! two alleles, so K (G or T) becomes (0, 0, 0.5, 0.5). A SNP enters the
//! network as a 4 x (2w+1) matrix: the reference context around the site,
//! one-hot per column, with the call encoding in the center column.

use crate::error::{Error, Result};
use crate::ingest::SnpDescriptor;
use crate::numcore::Tensor;

/// Nucleotide row order of every encoded column.
pub const BASES: [char; 4] = ['A', 'C', 'G', 'T'];

/// Base-pair positions are scaled by this factor before entering the
/// sinusoidal code, keeping wavelengths informative across chromosome-scale
/// coordinates.
pub const POSITION_SCALE: f64 = 1e-4;

/// Encode one IUPAC letter as a 4-vector over (A, C, G, T).
///
/// Missing calls (N) are rejected; they must be resolved before encoding.
pub fn encode_letter(letter: char) -> Result<[f64; 4]> {
    let v = match letter {
        'A' => [1.0, 0.0, 0.0, 0.0],
        'C' => [0.0, 1.0, 0.0, 0.0],
        'G' => [0.0, 0.0, 1.0, 0.0],
        'T' => [0.0, 0.0, 0.0, 1.0],
        'R' => [0.5, 0.0, 0.5, 0.0], // A/G
        'Y' => [0.0, 0.5, 0.0, 0.5], // C/T
        'S' => [0.0, 0.5, 0.5, 0.0], // C/G
        'W' => [0.5, 0.0, 0.0, 0.5], // A/T
        'K' => [0.0, 0.0, 0.5, 0.5], // G/T
        'M' => [0.5, 0.5, 0.0, 0.0], // A/C
        'N' => {
            return Err(Error::Data(
                "cannot encode missing call N; resolve missing calls upstream".into(),
            ))
        }
        other => return Err(Error::Data(format!("unknown genotype letter {other:?}"))),
    };
    Ok(v)
}

/// The two alleles named by a call, as indices into [`BASES`].
pub fn alleles(letter: char) -> Result<(usize, usize)> {
    let v = encode_letter(letter)?;
    let hits: Vec<usize> = (0..4).filter(|&i| v[i] > 0.0).collect();
    Ok(match hits[..] {
        [a] => (a, a),
        [a, b] => (a, b),
        _ => unreachable!("encode_letter yields one or two alleles"),
    })
}

/// One-hot context matrix for a SNP: 4 rows in (A, C, G, T) order and
/// `2w + 1` columns, the call in the center.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSnp {
    width: usize,
    data: Vec<f64>,
}

impl EncodedSnp {
    pub fn width(&self) -> usize {
        self.width
    }

    /// Flank half-width `w`.
    pub fn flank(&self) -> usize {
        (self.width - 1) / 2
    }

    /// Row-major 4 x width buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> [f64; 4] {
        [
            self.data[j],
            self.data[self.width + j],
            self.data[2 * self.width + j],
            self.data[3 * self.width + j],
        ]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![4, self.width], self.data.clone()).expect("consistent buffer")
    }
}

/// Build the 4 x (2w+1) context matrix for a descriptor and call: flank
/// columns one-hot from the reference context, center column from the call.
pub fn build_context_matrix(descriptor: &SnpDescriptor, call: char) -> Result<EncodedSnp> {
    let context: Vec<char> = descriptor.context.chars().collect();
    let width = context.len();
    if width % 2 == 0 {
        return Err(Error::Data(format!(
            "context for SNP {} has even length {width}",
            descriptor.id
        )));
    }
    let center = width / 2;
    let mut data = vec![0.0; 4 * width];
    for (j, &base) in context.iter().enumerate() {
        let col = if j == center {
            encode_letter(call)?
        } else {
            match base {
                'A' | 'C' | 'G' | 'T' => encode_letter(base)?,
                other => {
                    return Err(Error::Data(format!(
                        "context of SNP {} contains non-reference base {other:?}",
                        descriptor.id
                    )))
                }
            }
        };
        for r in 0..4 {
            data[r * width + j] = col[r];
        }
    }
    Ok(EncodedSnp { width, data })
}

/// Sinusoidal positional code of dimension `d` for a `(chromosome, position)`
/// pair. The first half encodes the chromosome index, the second half the
/// position scaled by [`POSITION_SCALE`]; within each half, entry pairs are
/// `(sin(v * f_i), cos(v * f_i))` with `f_i = 10000^(-2i / half)`.
pub fn positional_code(chromosome: u32, position: u64, d: usize) -> Result<Vec<f64>> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::Config(format!(
            "positional code dimension must be even and positive, got {d}"
        )));
    }
    if chromosome < 1 {
        return Err(Error::Data("chromosome index must be >= 1".into()));
    }
    if position < 1 {
        return Err(Error::Data("base-pair position must be >= 1".into()));
    }
    let half = d / 2;
    let mut code = vec![0.0; d];
    fill_half(&mut code[..half], chromosome as f64);
    fill_half(&mut code[half..], position as f64 * POSITION_SCALE);
    Ok(code)
}

fn fill_half(out: &mut [f64], value: f64) {
    let half = out.len();
    for (idx, slot) in out.iter_mut().enumerate() {
        let i = idx / 2;
        let freq = 10000f64.powf(-2.0 * i as f64 / half as f64);
        let angle = value * freq;
        *slot = if idx % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}
