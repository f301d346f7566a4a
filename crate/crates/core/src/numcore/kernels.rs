//! Matrix-multiply kernels. Every output element is accumulated by a single
//! task in a fixed order, so results are bitwise identical whatever the
//! rayon pool size.

use rayon::prelude::*;

/// Work (multiply-adds) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// `c[m,n] = a[m,k] * b[k,n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if n == 0 {
        return c;
    }
    let row = |(i, out): (usize, &mut [f64])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &x) in a_row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &y) in out.iter_mut().zip(b_row) {
                *o += x * y;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}

/// `c[m,k] = g[m,n] * b[k,n]^T`
pub(crate) fn matmul_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    if k == 0 {
        return c;
    }
    let row = |(i, out): (usize, &mut [f64])| {
        let g_row = &g[i * n..(i + 1) * n];
        for (p, o) in out.iter_mut().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            *o = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        c.par_chunks_mut(k).enumerate().for_each(row);
    } else {
        c.chunks_mut(k).enumerate().for_each(row);
    }
    c
}

/// `c[k,n] = a[m,k]^T * g[m,n]`
pub(crate) fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    if n == 0 {
        return c;
    }
    let row = |(p, out): (usize, &mut [f64])| {
        for i in 0..m {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let g_row = &g[i * n..(i + 1) * n];
            for (o, &y) in out.iter_mut().zip(g_row) {
                *o += x * y;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
    c
}
