//! Enumerative sphere shaping (ESS).
//!
//! Amplitudes are odd integers `1, 3, ..., 2M-1`. Since every odd square is
//! `1 mod 8`, a block of `L` amplitudes has energy `L + 8k` for an integer
//! `k`; all trellises here are indexed by that reduced energy `k`, which keeps
//! them dense. Index ordering is ascending lexicographic over amplitudes.
//!
//! The 4D codec concatenates an inner per-slot cap on 4-amplitude cells with
//! an outer cap on the block energy. Cells sharing an energy form a group;
//! the outer trellis weights each energy by its group size and the index is
//! split mixed-radix into (energy path, cell within group).

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use num_complex::Complex64;

use crate::alphabet::PdmSymbolStream;
use crate::error::{Error, Result};

/// Reduced energy `(a^2 - 1) / 8` of the odd amplitude `a`.
fn reduced(a: u32) -> usize {
    let a = a as usize;
    (a * a - 1) / 8
}

fn level_energies(m: usize) -> Vec<usize> {
    (0..m).map(|i| i * (i + 1) / 2).collect()
}

/// Converts an energy cap in a.u.^2 to the reduced grid for `len` amplitudes.
fn reduced_cap(len: usize, cap: u64) -> Option<usize> {
    let len = len as u64;
    (cap >= len).then(|| ((cap - len) / 8) as usize)
}

/// Number of length-`len` sequences over `M` levels at each exact reduced
/// energy, via repeated polynomial multiplication.
fn exact_energy_counts(weights: &[BigUint], len: usize, limit: usize) -> Vec<BigUint> {
    let mut dist = vec![BigUint::zero(); limit + 1];
    dist[0] = BigUint::one();
    for _ in 0..len {
        let mut next = vec![BigUint::zero(); limit + 1];
        for (e, c) in dist.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for (k, w) in weights.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                if e + k > limit {
                    break;
                }
                next[e + k] += c * w;
            }
        }
        dist = next;
    }
    dist
}

fn unit_weights(m: usize) -> Vec<BigUint> {
    let te = level_energies(m);
    let mut w = vec![BigUint::zero(); te[m - 1] + 1];
    for t in te {
        w[t] = BigUint::one();
    }
    w
}

/// Exact number of sequences of `length` amplitudes from `{1, ..., 2M-1}`
/// whose energy does not exceed `energy_cap`.
pub fn count_sequences(m: usize, length: usize, energy_cap: u64) -> BigUint {
    if m == 0 || length == 0 {
        return BigUint::zero();
    }
    let Some(cap) = reduced_cap(length, energy_cap) else {
        return BigUint::zero();
    };
    let max = length * level_energies(m)[m - 1];
    let limit = cap.min(max);
    exact_energy_counts(&unit_weights(m), length, limit)
        .into_iter()
        .sum()
}

fn pow2(bits: u64) -> BigUint {
    BigUint::one() << bits
}

/// Smallest achievable reduced energy whose cumulative count reaches `2^bits`.
fn min_reduced_cap(counts: &[BigUint], bits: u64) -> Option<usize> {
    let need = pow2(bits);
    let mut acc = BigUint::zero();
    for (e, c) in counts.iter().enumerate() {
        acc += c;
        if acc >= need {
            return Some(e);
        }
    }
    None
}

/// Smallest energy cap (a.u.^2) carrying at least `target_bits` per block.
pub fn min_cap_for_rate(m: usize, length: usize, target_bits: u64) -> Result<u64> {
    if m == 0 || length == 0 {
        return Err(Error::InvalidParameter("M and length must be positive".into()));
    }
    let max = length * level_energies(m)[m - 1];
    let counts = exact_energy_counts(&unit_weights(m), length, max);
    min_reduced_cap(&counts, target_bits)
        .map(|e| (length + 8 * e) as u64)
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "{target_bits} bits do not fit in {length} amplitudes with M = {m}"
            ))
        })
}

/// An encoded block: `4n` positive amplitudes and the index they carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapedBlock {
    pub amplitudes: Vec<u32>,
    pub index: BigUint,
}

/// Common interface of the 1D and 4D codecs.
pub trait ShapingCodec: Sync {
    fn encode(&self, index: &BigUint) -> Result<ShapedBlock>;
    fn decode(&self, amplitudes: &[u32]) -> Result<BigUint>;
    fn payload_bits(&self) -> u64;
    /// Number of PDM time slots per block (`n`).
    fn slots(&self) -> usize;
    fn m(&self) -> usize;
    /// Outer (block) energy cap in a.u.^2.
    fn energy_cap(&self) -> u64;
    /// Total number of admissible sequences.
    fn count(&self) -> BigUint;

    /// Bits per positive 1D amplitude.
    fn rate(&self) -> f64 {
        self.payload_bits() as f64 / (4 * self.slots()) as f64
    }
}

fn check_index(index: &BigUint, bits: u64) -> Result<()> {
    if index.bits() > bits {
        return Err(Error::IndexOutOfRange {
            index: index.to_string(),
            bits,
        });
    }
    Ok(())
}

fn check_amplitude(a: u32, m: usize) -> Result<()> {
    if a % 2 == 0 || a as usize > 2 * m - 1 {
        return Err(Error::InvalidCodeword(format!(
            "amplitude {a} not in {{1, 3, ..., {}}}",
            2 * m - 1
        )));
    }
    Ok(())
}

/// Sphere shaping over `4n` one-dimensional amplitudes.
#[derive(Debug, Clone)]
pub struct EssCodec1D {
    m: usize,
    slots: usize,
    energy_cap: u64,
    cap: usize,
    level_energy: Vec<usize>,
    /// `trellis[j][e]`: completions from position `j` at reduced energy `e`.
    trellis: Vec<Vec<BigUint>>,
    payload_bits: u64,
}

impl EssCodec1D {
    pub fn new(m: usize, slots: usize, energy_cap: u64) -> Result<Self> {
        if m == 0 || slots == 0 {
            return Err(Error::InvalidParameter("M and n must be positive".into()));
        }
        let len = 4 * slots;
        let cap = reduced_cap(len, energy_cap).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "energy cap {energy_cap} below the minimum block energy {len}"
            ))
        })?;
        let level_energy = level_energies(m);
        let cap = cap.min(len * level_energy[m - 1]);
        let mut trellis = vec![vec![BigUint::zero(); cap + 1]; len + 1];
        trellis[len].iter_mut().for_each(|c| *c = BigUint::one());
        for j in (0..len).rev() {
            let (head, tail) = trellis.split_at_mut(j + 1);
            let (row, next) = (&mut head[j], &tail[0]);
            for (e, slot) in row.iter_mut().enumerate() {
                for &t in &level_energy {
                    if e + t > cap {
                        break;
                    }
                    *slot += &next[e + t];
                }
            }
        }
        let total = &trellis[0][0];
        if total.is_zero() {
            return Err(Error::Infeasible("no admissible sequences".into()));
        }
        let payload_bits = total.bits() - 1;
        Ok(Self {
            m,
            slots,
            energy_cap,
            cap,
            level_energy,
            trellis,
            payload_bits,
        })
    }

    /// Codec at the smallest cap that carries `target_bits` per block.
    pub fn for_rate(m: usize, slots: usize, target_bits: u64) -> Result<Self> {
        let cap = min_cap_for_rate(m, 4 * slots, target_bits)?;
        Self::new(m, slots, cap)
    }

    /// Trellis entry at position `j` and accumulated energy (a.u.^2).
    pub fn trellis_count(&self, position: usize, energy: u64) -> BigUint {
        let Some(e) = reduced_cap(position, energy) else {
            return BigUint::zero();
        };
        if (energy - position as u64) % 8 != 0 || e > self.cap {
            return BigUint::zero();
        }
        self.trellis[position][e].clone()
    }
}

impl ShapingCodec for EssCodec1D {
    fn encode(&self, index: &BigUint) -> Result<ShapedBlock> {
        check_index(index, self.payload_bits)?;
        let len = 4 * self.slots;
        let mut rest = index.clone();
        let mut e = 0;
        let mut amplitudes = Vec::with_capacity(len);
        for j in 0..len {
            let next = &self.trellis[j + 1];
            let mut chosen = None;
            for (i, &t) in self.level_energy.iter().enumerate() {
                if e + t > self.cap {
                    break;
                }
                let c = &next[e + t];
                if rest < *c {
                    chosen = Some((i, t));
                    break;
                }
                rest -= c;
            }
            let (i, t) = chosen.expect("index below trellis count always has a branch");
            amplitudes.push((2 * i + 1) as u32);
            e += t;
        }
        Ok(ShapedBlock {
            amplitudes,
            index: index.clone(),
        })
    }

    fn decode(&self, amplitudes: &[u32]) -> Result<BigUint> {
        let len = 4 * self.slots;
        if amplitudes.len() != len {
            return Err(Error::InvalidCodeword(format!(
                "expected {len} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let mut e = 0;
        let mut index = BigUint::zero();
        for (j, &a) in amplitudes.iter().enumerate() {
            check_amplitude(a, self.m)?;
            let level = (a as usize - 1) / 2;
            let next = &self.trellis[j + 1];
            for &t in &self.level_energy[..level] {
                if e + t > self.cap {
                    break;
                }
                index += &next[e + t];
            }
            e += reduced(a);
            if e > self.cap {
                return Err(Error::InvalidCodeword(format!(
                    "block energy exceeds cap {}",
                    self.energy_cap
                )));
            }
        }
        if index.bits() > self.payload_bits {
            return Err(Error::InvalidCodeword(
                "sequence lies outside the used index range".into(),
            ));
        }
        Ok(index)
    }

    fn payload_bits(&self) -> u64 {
        self.payload_bits
    }

    fn slots(&self) -> usize {
        self.slots
    }

    fn m(&self) -> usize {
        self.m
    }

    fn energy_cap(&self) -> u64 {
        self.energy_cap
    }

    fn count(&self) -> BigUint {
        self.trellis[0][0].clone()
    }
}

/// Inner-outer concatenated shaping: each slot's 4-amplitude cell obeys an
/// inner cap, and the block obeys the outer cap.
#[derive(Debug, Clone)]
pub struct EssCodec4D {
    m: usize,
    slots: usize,
    inner_cap: u64,
    outer_cap: u64,
    cap: usize,
    /// Cells grouped by reduced energy, each group in lexicographic order.
    groups: Vec<Vec<[u32; 4]>>,
    multiplicity: Vec<BigUint>,
    trellis: Vec<Vec<BigUint>>,
    payload_bits: u64,
}

fn inner_cells(m: usize, inner: usize) -> Vec<Vec<[u32; 4]>> {
    let te = level_energies(m);
    let mut groups: Vec<Vec<[u32; 4]>> = vec![Vec::new(); inner + 1];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let k = te[a] + te[b] + te[c] + te[d];
                    if k <= inner {
                        let amp = |i: usize| (2 * i + 1) as u32;
                        groups[k].push([amp(a), amp(b), amp(c), amp(d)]);
                    }
                }
            }
        }
    }
    groups
}

fn group_sizes(groups: &[Vec<[u32; 4]>]) -> Vec<BigUint> {
    groups.iter().map(|g| BigUint::from(g.len())).collect()
}

impl EssCodec4D {
    pub fn new(m: usize, slots: usize, inner_cap: u64, outer_cap: u64) -> Result<Self> {
        if m == 0 || slots == 0 {
            return Err(Error::InvalidParameter("M and n must be positive".into()));
        }
        let inner = reduced_cap(4, inner_cap).ok_or_else(|| {
            Error::InvalidParameter(format!("inner cap {inner_cap} below 4"))
        })?;
        let inner = inner.min(4 * level_energies(m)[m - 1]);
        let cap = reduced_cap(4 * slots, outer_cap).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "outer cap {outer_cap} below the minimum block energy {}",
                4 * slots
            ))
        })?;
        let cap = cap.min(slots * inner);
        let groups = inner_cells(m, inner);
        let multiplicity = group_sizes(&groups);
        let mut trellis = vec![vec![BigUint::zero(); cap + 1]; slots + 1];
        trellis[slots].iter_mut().for_each(|c| *c = BigUint::one());
        for j in (0..slots).rev() {
            let (head, tail) = trellis.split_at_mut(j + 1);
            let (row, next) = (&mut head[j], &tail[0]);
            for (e, slot) in row.iter_mut().enumerate() {
                for (k, mult) in multiplicity.iter().enumerate() {
                    if e + k > cap {
                        break;
                    }
                    if !mult.is_zero() {
                        *slot += mult * &next[e + k];
                    }
                }
            }
        }
        let total = &trellis[0][0];
        if total.is_zero() {
            return Err(Error::Infeasible("no admissible sequences".into()));
        }
        let payload_bits = total.bits() - 1;
        Ok(Self {
            m,
            slots,
            inner_cap,
            outer_cap,
            cap,
            groups,
            multiplicity,
            trellis,
            payload_bits,
        })
    }

    /// Smallest inner cap for which `(#cells)^n >= 2^target_bits`.
    pub fn default_inner_cap(m: usize, slots: usize, target_bits: u64) -> Result<u64> {
        if m == 0 || slots == 0 {
            return Err(Error::InvalidParameter("M and n must be positive".into()));
        }
        let max = 4 * level_energies(m)[m - 1];
        let sizes = group_sizes(&inner_cells(m, max));
        let need = pow2(target_bits);
        let mut cells = BigUint::zero();
        for (k, s) in sizes.iter().enumerate() {
            if s.is_zero() {
                continue;
            }
            cells += s;
            if num_traits::pow(cells.clone(), slots) >= need {
                return Ok((4 + 8 * k) as u64);
            }
        }
        Err(Error::Infeasible(format!(
            "{target_bits} bits do not fit in {slots} slots with M = {m}"
        )))
    }

    /// Smallest outer cap for `target_bits`, given an inner cap (or the
    /// default one when `None`).
    pub fn for_rate(
        m: usize,
        slots: usize,
        target_bits: u64,
        inner_cap: Option<u64>,
    ) -> Result<Self> {
        let inner_cap = match inner_cap {
            Some(c) => c,
            None => Self::default_inner_cap(m, slots, target_bits)?,
        };
        let inner = reduced_cap(4, inner_cap)
            .ok_or_else(|| Error::InvalidParameter(format!("inner cap {inner_cap} below 4")))?
            .min(4 * level_energies(m)[m - 1]);
        let weights = group_sizes(&inner_cells(m, inner));
        let counts = exact_energy_counts(&weights, slots, slots * inner);
        let e = min_reduced_cap(&counts, target_bits).ok_or_else(|| {
            Error::Infeasible(format!(
                "{target_bits} bits do not fit under inner cap {inner_cap}"
            ))
        })?;
        Self::new(m, slots, inner_cap, (4 * slots + 8 * e) as u64)
    }

    pub fn inner_cap(&self) -> u64 {
        self.inner_cap
    }

    /// Number of admissible cells per reduced inner energy.
    pub fn cell_multiplicities(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }
}

impl ShapingCodec for EssCodec4D {
    fn encode(&self, index: &BigUint) -> Result<ShapedBlock> {
        check_index(index, self.payload_bits)?;
        let mut rest = index.clone();
        let mut e = 0;
        let mut amplitudes = Vec::with_capacity(4 * self.slots);
        for j in 0..self.slots {
            let next = &self.trellis[j + 1];
            let mut chosen = None;
            for (k, mult) in self.multiplicity.iter().enumerate() {
                if e + k > self.cap {
                    break;
                }
                if mult.is_zero() {
                    continue;
                }
                let tail = &next[e + k];
                let span = mult * tail;
                if rest < span {
                    let cell = &rest / tail;
                    rest %= tail;
                    chosen = Some((k, cell.to_usize().expect("cell index fits usize")));
                    break;
                }
                rest -= span;
            }
            let (k, cell) = chosen.expect("index below trellis count always has a branch");
            amplitudes.extend_from_slice(&self.groups[k][cell]);
            e += k;
        }
        Ok(ShapedBlock {
            amplitudes,
            index: index.clone(),
        })
    }

    fn decode(&self, amplitudes: &[u32]) -> Result<BigUint> {
        if amplitudes.len() != 4 * self.slots {
            return Err(Error::InvalidCodeword(format!(
                "expected {} amplitudes, got {}",
                4 * self.slots,
                amplitudes.len()
            )));
        }
        let mut e = 0;
        let mut index = BigUint::zero();
        for (j, chunk) in amplitudes.chunks_exact(4).enumerate() {
            for &a in chunk {
                check_amplitude(a, self.m)?;
            }
            let cell = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let k: usize = cell.iter().map(|&a| reduced(a)).sum();
            if k >= self.groups.len() {
                return Err(Error::InvalidCodeword(format!(
                    "slot {j} exceeds inner cap {}",
                    self.inner_cap
                )));
            }
            if e + k > self.cap {
                return Err(Error::InvalidCodeword(format!(
                    "block energy exceeds cap {}",
                    self.outer_cap
                )));
            }
            let next = &self.trellis[j + 1];
            for (kk, mult) in self.multiplicity.iter().enumerate().take(k) {
                if e + kk > self.cap {
                    break;
                }
                index += mult * &next[e + kk];
            }
            let pos = self.groups[k]
                .binary_search(&cell)
                .expect("every in-cap cell is listed in its group");
            index += BigUint::from(pos) * &next[e + k];
            e += k;
        }
        if index.bits() > self.payload_bits {
            return Err(Error::InvalidCodeword(
                "sequence lies outside the used index range".into(),
            ));
        }
        Ok(index)
    }

    fn payload_bits(&self) -> u64 {
        self.payload_bits
    }

    fn slots(&self) -> usize {
        self.slots
    }

    fn m(&self) -> usize {
        self.m
    }

    fn energy_cap(&self) -> u64 {
        self.outer_cap
    }

    fn count(&self) -> BigUint {
        self.trellis[0][0].clone()
    }
}

/// Row of the codec summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecSummary {
    pub m: usize,
    pub n: usize,
    pub inner_cap: Option<u64>,
    pub outer_cap: u64,
    pub payload_bits: u64,
    pub rate: f64,
    pub count: BigUint,
}

impl CodecSummary {
    pub fn of_1d(codec: &EssCodec1D) -> Self {
        Self::build(codec, None)
    }

    pub fn of_4d(codec: &EssCodec4D) -> Self {
        Self::build(codec, Some(codec.inner_cap()))
    }

    fn build(codec: &dyn ShapingCodec, inner_cap: Option<u64>) -> Self {
        Self {
            m: codec.m(),
            n: codec.slots(),
            inner_cap,
            outer_cap: codec.energy_cap(),
            payload_bits: codec.payload_bits(),
            rate: codec.rate(),
            count: codec.count(),
        }
    }

    pub const CSV_HEADER: &'static str = "M,n,inner_cap,outer_cap,payload_bits,H,count";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{}",
            self.m,
            self.n,
            self.inner_cap.map(|c| c.to_string()).unwrap_or_default(),
            self.outer_cap,
            self.payload_bits,
            self.rate,
            self.count
        )
    }
}

fn random_index(rng: &mut ChaCha8Rng, bits: u64) -> BigUint {
    let nbytes = bits.div_ceil(8) as usize;
    let mut bytes = vec![0u8; nbytes];
    rng.fill_bytes(&mut bytes);
    if bits % 8 != 0 {
        let last = nbytes - 1;
        bytes[last] &= (1u8 << (bits % 8)) - 1;
    }
    BigUint::from_bytes_le(&bytes)
}

/// Encodes `blocks` uniformly random payloads and maps each slot's
/// amplitude quadruple to `(I_X, Q_X, I_Y, Q_Y)` with random signs.
pub fn shaped_stream<C: ShapingCodec + ?Sized>(
    codec: &C,
    blocks: usize,
    payload_seed: u64,
    sign_seed: u64,
) -> Result<PdmSymbolStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(payload_seed);
    let indices: Vec<BigUint> = (0..blocks)
        .map(|_| random_index(&mut rng, codec.payload_bits()))
        .collect();
    shaped_stream_from_indices(codec, &indices, sign_seed)
}

/// Like [`shaped_stream`] with explicit payload indices.
pub fn shaped_stream_from_indices<C: ShapingCodec + ?Sized>(
    codec: &C,
    indices: &[BigUint],
    sign_seed: u64,
) -> Result<PdmSymbolStream> {
    if indices.is_empty() {
        return Err(Error::InvalidParameter("at least one block required".into()));
    }
    let encoded = indices
        .par_iter()
        .map(|i| codec.encode(i))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sign_seed);
    let mut raw = Vec::with_capacity(indices.len() * codec.slots());
    for block in &encoded {
        for cell in block.amplitudes.chunks_exact(4) {
            let mut s = [0.0; 4];
            for (v, &a) in s.iter_mut().zip(cell) {
                *v = if rng.random::<bool>() { a as f64 } else { -(a as f64) };
            }
            raw.push([Complex64::new(s[0], s[1]), Complex64::new(s[2], s[3])]);
        }
    }
    PdmSymbolStream::from_raw(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(m: usize, len: usize, cap: u64) -> u64 {
        let mut count = 0;
        let total = m.pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let mut e = 0u64;
            for _ in 0..len {
                let a = (2 * (c % m) + 1) as u64;
                e += a * a;
                c /= m;
            }
            if e <= cap {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn small_counts() {
        assert_eq!(count_sequences(2, 4, 20), BigUint::from(11u32));
        assert_eq!(count_sequences(4, 1, 9), BigUint::from(2u32));
        assert_eq!(count_sequences(4, 3, 2), BigUint::zero());
        for m in 1..=4usize {
            for len in 1..=5usize {
                let cap = (len * (2 * m - 1).pow(2)) as u64;
                assert_eq!(count_sequences(m, len, cap), BigUint::from(m).pow(len as u32));
                assert_eq!(count_sequences(m, len, cap).to_u64().unwrap(), brute_force(m, len, cap));
            }
        }
    }

    #[test]
    fn count_exceeds_64_bits() {
        let c = count_sequences(8, 40, 40 * 225);
        assert_eq!(c, BigUint::from(8u32).pow(40));
        assert!(c.bits() > 64);
    }

    #[test]
    fn min_cap_examples() {
        assert_eq!(min_cap_for_rate(2, 4, 3).unwrap(), 20);
        assert_eq!(min_cap_for_rate(4, 20, 40).unwrap(), 20 * 49);
        assert!(matches!(min_cap_for_rate(4, 20, 41), Err(Error::Infeasible(_))));
        let cap = min_cap_for_rate(4, 20, 32).unwrap();
        assert!(count_sequences(4, 20, cap) >= pow2(32));
        assert!(count_sequences(4, 20, cap - 8) < pow2(32));
    }

    #[test]
    fn codec_1d_small_instance() {
        let codec = EssCodec1D::new(2, 1, 20).unwrap();
        assert_eq!(codec.count(), BigUint::from(11u32));
        assert_eq!(codec.payload_bits(), 3);
        let first = codec.encode(&BigUint::zero()).unwrap();
        assert_eq!(first.amplitudes, vec![1, 1, 1, 1]);
        let mut seen = Vec::new();
        for i in 0..8u32 {
            let b = codec.encode(&BigUint::from(i)).unwrap();
            let e: u32 = b.amplitudes.iter().map(|a| a * a).sum();
            assert!(e <= 20);
            assert_eq!(codec.decode(&b.amplitudes).unwrap(), BigUint::from(i));
            seen.push(b.amplitudes);
        }
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, seen, "indices map in ascending lexicographic order");
        assert!(codec.encode(&BigUint::from(8u32)).is_err());
        assert!(matches!(
            codec.decode(&[3, 3, 3, 1]),
            Err(Error::InvalidCodeword(_))
        ));
        assert!(matches!(
            codec.decode(&[2, 1, 1, 1]),
            Err(Error::InvalidCodeword(_))
        ));
    }

    #[test]
    fn codec_4d_degenerate_inner_cap() {
        let codec = EssCodec4D::new(4, 3, 4, 1000).unwrap();
        assert_eq!(codec.count(), BigUint::one());
        assert_eq!(codec.payload_bits(), 0);
        let b = codec.encode(&BigUint::zero()).unwrap();
        assert!(b.amplitudes.iter().all(|&a| a == 1));
    }

    #[test]
    fn codec_4d_matches_brute_force() {
        let codec = EssCodec4D::new(2, 2, 20, 28).unwrap();
        let mut valid = 0u64;
        for code in 0..256u32 {
            let amps: Vec<u32> = (0..8).map(|i| if code >> i & 1 == 1 { 3 } else { 1 }).collect();
            let slot_e: Vec<u32> = amps.chunks(4).map(|c| c.iter().map(|a| a * a).sum()).collect();
            if slot_e.iter().all(|&e| e <= 20) && slot_e.iter().sum::<u32>() <= 28 {
                valid += 1;
            }
        }
        assert_eq!(codec.count().to_u64().unwrap(), valid);
        assert_eq!(codec.payload_bits(), 63 - valid.leading_zeros() as u64);
        for i in 0..(1u32 << codec.payload_bits()) {
            let b = codec.encode(&BigUint::from(i)).unwrap();
            assert_eq!(codec.decode(&b.amplitudes).unwrap(), BigUint::from(i));
        }
    }

    #[test]
    fn four_d_needs_at_least_the_1d_cap() {
        for n in [2usize, 5] {
            let bits = (6.4 * n as f64).round() as u64;
            let c1 = EssCodec1D::for_rate(4, n, bits).unwrap();
            let c4 = EssCodec4D::for_rate(4, n, bits, None).unwrap();
            assert!(c4.energy_cap() >= c1.energy_cap());
            assert!(c4.payload_bits() >= bits);
        }
    }

    #[test]
    fn summary_row() {
        let c = EssCodec1D::new(2, 1, 20).unwrap();
        let row = CodecSummary::of_1d(&c).csv_row();
        assert_eq!(row, "2,1,,20,3,0.750000,11");
    }

    #[test]
    fn zero_payload_stream_is_deterministic() {
        let c = EssCodec1D::for_rate(4, 5, 32).unwrap();
        let a = shaped_stream_from_indices(&c, &[BigUint::zero()], 1).unwrap();
        let b = shaped_stream_from_indices(&c, &[BigUint::zero()], 1).unwrap();
        assert_eq!(a, b);
        let p = a.slot_powers();
        assert!(p.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }
}
