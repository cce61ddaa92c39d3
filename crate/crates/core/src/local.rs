//! Single- and two-site operator algebra in the `(↑, ↓)` local basis.

use crate::c64;

pub(crate) type Op2 = [[c64; 2]; 2];
pub(crate) type Op4 = [[c64; 4]; 4];

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };
const I: c64 = c64 { re: 0.0, im: 1.0 };

pub(crate) fn sigma_x() -> Op2 {
    [[ZERO, ONE], [ONE, ZERO]]
}

pub(crate) fn sigma_y() -> Op2 {
    [[ZERO, -I], [I, ZERO]]
}

pub(crate) fn sigma_z() -> Op2 {
    [[ONE, ZERO], [ZERO, -ONE]]
}

pub(crate) fn paulis() -> [Op2; 3] {
    [sigma_x(), sigma_y(), sigma_z()]
}

/// `A ⊗ B` with local index `l = bit_first + 2 * bit_second`.
pub(crate) fn kron(a: &Op2, b: &Op2) -> Op4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[r & 1][c & 1] * b[r >> 1][c >> 1];
        }
    }
    out
}

pub(crate) fn add_scaled(acc: &mut Op4, op: &Op4, scale: c64) {
    for r in 0..4 {
        for c in 0..4 {
            acc[r][c] += op[r][c] * scale;
        }
    }
}

/// Emit `op_{i,j} |s⟩` as `(config, amplitude)` pairs, for 0-based sites `i != j`.
#[inline]
pub(crate) fn apply_two_site(op: &Op4, i: usize, j: usize, s: u32, out: &mut Vec<(u32, c64)>) {
    let col = ((s >> i) & 1) as usize | ((((s >> j) & 1) as usize) << 1);
    let cleared = s & !(1 << i) & !(1 << j);
    for (row, line) in op.iter().enumerate() {
        let amp = line[col];
        if amp != ZERO {
            let t = cleared | (((row & 1) as u32) << i) | (((row >> 1) as u32) << j);
            out.push((t, amp));
        }
    }
}

/// Apply `op` on sites `(i, j)` to a full-space vector.
pub(crate) fn apply_two_site_vector(op: &Op4, i: usize, j: usize, input: &[c64], output: &mut [c64]) {
    let mi = 1usize << i;
    let mj = 1usize << j;
    for s in 0..input.len() {
        if s & mi != 0 || s & mj != 0 {
            continue;
        }
        let idx = [s, s | mi, s | mj, s | mi | mj];
        let v = [input[idx[0]], input[idx[1]], input[idx[2]], input[idx[3]]];
        for r in 0..4 {
            let mut acc = ZERO;
            for c in 0..4 {
                acc += op[r][c] * v[c];
            }
            output[idx[r]] += acc;
        }
    }
}
