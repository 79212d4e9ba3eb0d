//! Primitive differentiable operations.
//!
//! Every operation builds a graph node carrying its backward rule. Shape
//! misuse is a programming error and panics with a message naming the
//! offending shapes. Elementwise binaries accept an equal-shape right
//! operand, a right operand whose shape is a suffix of the left shape
//! (broadcast over the leading axes), or a single-element right operand.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::elem::Elem;
use super::tensor::Tensor;

// ── raw matrix kernels (shared by forward and backward paths) ─────────

/// out[m×p] += a[m×k] · b[k×p]
pub(crate) fn mm_acc<T: Elem>(a: &[T], b: &[T], m: usize, k: usize, p: usize, out: &mut [T]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * p..(i + 1) * p];
        for (l, &av) in a_row.iter().enumerate() {
            let b_row = &b[l * p..(l + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// out[m×p] += a[m×k] · b[p×k]ᵀ (dot products of rows)
pub(crate) fn mm_abt_acc<T: Elem>(a: &[T], b: &[T], m: usize, k: usize, p: usize, out: &mut [T]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..p {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc = acc + av * bv;
            }
            out[i * p + j] = out[i * p + j] + acc;
        }
    }
}

/// out[k×p] += a[m×k]ᵀ · b[m×p]
pub(crate) fn mm_atb_acc<T: Elem>(a: &[T], b: &[T], m: usize, k: usize, p: usize, out: &mut [T]) {
    for l in 0..m {
        let a_row = &a[l * k..(l + 1) * k];
        let b_row = &b[l * p..(l + 1) * p];
        for (i, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[i * p..(i + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

// ── elementwise binaries with suffix broadcasting ──────────────────────

enum Broadcast {
    Same,
    /// Right operand repeats `reps` times along the flattened leading axes.
    Suffix(usize),
    Scalar,
}

fn broadcast_kind<T: Elem>(a: &Tensor<T>, b: &Tensor<T>, opname: &str) -> Broadcast {
    if a.shape() == b.shape() {
        return Broadcast::Same;
    }
    if b.numel() == 1 {
        return Broadcast::Scalar;
    }
    let (an, bn) = (a.ndim(), b.ndim());
    if bn < an && a.shape()[an - bn..] == *b.shape() {
        return Broadcast::Suffix(a.numel() / b.numel());
    }
    panic!(
        "{opname} dimension error: shapes {:?} and {:?} are not broadcast-compatible",
        a.shape(),
        b.shape()
    );
}

/// Reduce a gradient of the broadcast result back to the right operand's
/// shape by summing over the repeated leading axes.
fn reduce_to_rhs<T: Elem>(grad: &[T], kind: &Broadcast, rhs_len: usize) -> Vec<T> {
    match kind {
        Broadcast::Same => grad.to_vec(),
        Broadcast::Scalar => {
            let mut s = T::zero();
            for &g in grad {
                s = s + g;
            }
            vec![s]
        }
        Broadcast::Suffix(reps) => {
            let mut out = vec![T::zero(); rhs_len];
            for r in 0..*reps {
                let block = &grad[r * rhs_len..(r + 1) * rhs_len];
                for (o, &g) in out.iter_mut().zip(block) {
                    *o = *o + g;
                }
            }
            out
        }
    }
}

fn binary_forward<T: Elem>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    kind: &Broadcast,
    f: impl Fn(T, T) -> T,
) -> Vec<T> {
    let ad = a.data();
    let bd = b.data();
    match kind {
        Broadcast::Same => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::Scalar => {
            let y = bd[0];
            ad.iter().map(|&x| f(x, y)).collect()
        }
        Broadcast::Suffix(_) => {
            let n = bd.len();
            ad.iter().enumerate().map(|(i, &x)| f(x, bd[i % n])).collect()
        }
    }
}

pub fn add<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let kind = broadcast_kind(a, b, "add");
    let data = binary_forward(a, b, &kind, |x, y| x + y);
    let rhs_len = b.numel();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |args, _| {
            vec![
                Some(args.grad_out.to_vec()),
                Some(reduce_to_rhs(args.grad_out, &kind, rhs_len)),
            ]
        }),
    )
}

pub fn sub<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let kind = broadcast_kind(a, b, "sub");
    let data = binary_forward(a, b, &kind, |x, y| x - y);
    let rhs_len = b.numel();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |args, _| {
            let db = reduce_to_rhs(args.grad_out, &kind, rhs_len)
                .into_iter()
                .map(|g| -g)
                .collect();
            vec![Some(args.grad_out.to_vec()), Some(db)]
        }),
    )
}

pub fn mul<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let kind = broadcast_kind(a, b, "mul");
    let data = binary_forward(a, b, &kind, |x, y| x * y);
    let rhs_len = b.numel();
    Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |args, inputs| {
            let ad = inputs[0].data();
            let bd = inputs[1].data();
            let n = bd.len();
            let da: Vec<T> = match kind {
                Broadcast::Same => args.grad_out.iter().zip(bd).map(|(&g, &y)| g * y).collect(),
                Broadcast::Scalar => args.grad_out.iter().map(|&g| g * bd[0]).collect(),
                Broadcast::Suffix(_) => args
                    .grad_out
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| g * bd[i % n])
                    .collect(),
            };
            let gtimesa: Vec<T> = args.grad_out.iter().zip(ad).map(|(&g, &x)| g * x).collect();
            vec![Some(da), Some(reduce_to_rhs(&gtimesa, &kind, rhs_len))]
        }),
    )
}

/// Multiply by a compile-time constant.
pub fn scale<T: Elem>(x: &Tensor<T>, c: f64) -> Tensor<T> {
    let cv = T::from_f64(c);
    let data = x.data().iter().map(|&v| v * cv).collect();
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |args, _| {
            vec![Some(args.grad_out.iter().map(|&g| g * cv).collect())]
        }),
    )
}

pub fn neg<T: Elem>(x: &Tensor<T>) -> Tensor<T> {
    scale(x, -1.0)
}

pub fn relu<T: Elem>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(|args, inputs| {
            let xd = inputs[0].data();
            let dx = args
                .grad_out
                .iter()
                .zip(xd)
                .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                .collect();
            vec![Some(dx)]
        }),
    )
}

// ── matrix products ────────────────────────────────────────────────────

/// Standard 2-D matrix product: \[m×k\] · \[k×p\] → \[m×p\].
pub fn matmul<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert!(
        a.ndim() == 2 && b.ndim() == 2 && a.shape()[1] == b.shape()[0],
        "matmul dimension error: {:?} x {:?}",
        a.shape(),
        b.shape()
    );
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let p = b.shape()[1];
    let mut out = vec![T::zero(); m * p];
    mm_acc(a.data(), b.data(), m, k, p, &mut out);
    Tensor::from_op(
        vec![m, p],
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |args, inputs| {
            let ad = inputs[0].data();
            let bd = inputs[1].data();
            let mut da = vec![T::zero(); m * k];
            let mut db = vec![T::zero(); k * p];
            // dA = dC · Bᵀ, dB = Aᵀ · dC
            mm_abt_acc(args.grad_out, bd, m, p, k, &mut da);
            mm_atb_acc(ad, args.grad_out, m, k, p, &mut db);
            vec![Some(da), Some(db)]
        }),
    )
}

/// Batched matrix product: \[g×m×k\] · \[g×k×p\] → \[g×m×p\].
pub fn bmm<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert!(
        a.ndim() == 3 && b.ndim() == 3 && a.shape()[0] == b.shape()[0] && a.shape()[2] == b.shape()[1],
        "bmm dimension error: {:?} x {:?}",
        a.shape(),
        b.shape()
    );
    let (g, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let p = b.shape()[2];
    let mut out = vec![T::zero(); g * m * p];
    for i in 0..g {
        mm_acc(
            &a.data()[i * m * k..(i + 1) * m * k],
            &b.data()[i * k * p..(i + 1) * k * p],
            m,
            k,
            p,
            &mut out[i * m * p..(i + 1) * m * p],
        );
    }
    Tensor::from_op(
        vec![g, m, p],
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |args, inputs| {
            let ad = inputs[0].data();
            let bd = inputs[1].data();
            let mut da = vec![T::zero(); g * m * k];
            let mut db = vec![T::zero(); g * k * p];
            for i in 0..g {
                let go = &args.grad_out[i * m * p..(i + 1) * m * p];
                mm_abt_acc(go, &bd[i * k * p..(i + 1) * k * p], m, p, k, &mut da[i * m * k..(i + 1) * m * k]);
                mm_atb_acc(&ad[i * m * k..(i + 1) * m * k], go, m, k, p, &mut db[i * k * p..(i + 1) * k * p]);
            }
            vec![Some(da), Some(db)]
        }),
    )
}

/// Tile a tensor along a new leading batch axis: shape s → \[reps, s…\].
pub fn broadcast_to_batch<T: Elem>(x: &Tensor<T>, reps: usize) -> Tensor<T> {
    let n = x.numel();
    let mut shape = Vec::with_capacity(x.ndim() + 1);
    shape.push(reps);
    shape.extend_from_slice(x.shape());
    let mut data = Vec::with_capacity(reps * n);
    for _ in 0..reps {
        data.extend_from_slice(x.data());
    }
    Tensor::from_op(
        shape,
        data,
        vec![x.clone()],
        Box::new(move |args, _| {
            let mut dx = vec![T::zero(); n];
            for r in 0..reps {
                let block = &args.grad_out[r * n..(r + 1) * n];
                for (o, &g) in dx.iter_mut().zip(block) {
                    *o = *o + g;
                }
            }
            vec![Some(dx)]
        }),
    )
}

// ── shape manipulation ─────────────────────────────────────────────────

pub fn reshape<T: Elem>(x: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    assert_eq!(
        numel,
        x.numel(),
        "reshape dimension error: {:?} into {:?}",
        x.shape(),
        shape
    );
    Tensor::from_op(
        shape.to_vec(),
        x.data().to_vec(),
        vec![x.clone()],
        Box::new(|args, _| vec![Some(args.grad_out.to_vec())]),
    )
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn permute_raw<T: Elem>(data: &[T], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<T>) {
    let nd = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides_of(shape);
    let gather_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut coords = vec![0usize; nd];
    let mut in_idx = 0usize;
    for _ in 0..data.len() {
        out.push(data[in_idx]);
        // odometer increment over out_shape, tracking the gathered input index
        for d in (0..nd).rev() {
            coords[d] += 1;
            in_idx += gather_strides[d];
            if coords[d] < out_shape[d] {
                break;
            }
            in_idx -= gather_strides[d] * out_shape[d];
            coords[d] = 0;
        }
    }
    (out_shape, out)
}

/// Reorder axes: `out.shape[i] = x.shape[perm[i]]`. `transpose` of a 2-D
/// tensor is `permute(x, &[1, 0])`.
pub fn permute<T: Elem>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let nd = x.ndim();
    let mut seen = vec![false; nd];
    assert_eq!(perm.len(), nd, "permute dimension error: perm {:?} for shape {:?}", perm, x.shape());
    for &p in perm {
        assert!(p < nd && !seen[p], "permute dimension error: perm {:?} for shape {:?}", perm, x.shape());
        seen[p] = true;
    }
    let (out_shape, data) = permute_raw(x.data(), x.shape(), perm);
    let perm_owned = perm.to_vec();
    Tensor::from_op(
        out_shape.clone(),
        data,
        vec![x.clone()],
        Box::new(move |args, _| {
            let mut inv = vec![0usize; perm_owned.len()];
            for (i, &p) in perm_owned.iter().enumerate() {
                inv[p] = i;
            }
            let (_, dx) = permute_raw(args.grad_out, &out_shape, &inv);
            vec![Some(dx)]
        }),
    )
}

pub fn transpose2d<T: Elem>(x: &Tensor<T>) -> Tensor<T> {
    assert_eq!(x.ndim(), 2, "transpose dimension error: shape {:?}", x.shape());
    permute(x, &[1, 0])
}

/// Concatenate tensors along `axis`; all other dimensions must agree.
pub fn concat<T: Elem>(parts: &[&Tensor<T>], axis: usize) -> Tensor<T> {
    assert!(!parts.is_empty(), "concat of zero tensors");
    let base = parts[0].shape().to_vec();
    assert!(axis < base.len(), "concat dimension error: axis {axis} for shape {base:?}");
    let mut axis_total = 0;
    for p in parts {
        assert_eq!(p.ndim(), base.len(), "concat dimension error: {:?} vs {:?}", p.shape(), base);
        for (d, (&a, &b)) in p.shape().iter().zip(&base).enumerate() {
            assert!(
                d == axis || a == b,
                "concat dimension error: {:?} vs {:?} on axis {axis}",
                p.shape(),
                base
            );
        }
        axis_total += p.shape()[axis];
    }
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let mut out_shape = base.clone();
    out_shape[axis] = axis_total;

    let mut data = vec![T::zero(); outer * axis_total * inner];
    let mut offset = 0;
    for p in parts {
        let len = p.shape()[axis];
        for o in 0..outer {
            let src = &p.data()[o * len * inner..(o + 1) * len * inner];
            let dst_start = (o * axis_total + offset) * inner;
            data[dst_start..dst_start + len * inner].copy_from_slice(src);
        }
        offset += len;
    }

    let part_lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let inputs: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
    Tensor::from_op(
        out_shape,
        data,
        inputs,
        Box::new(move |args, _| {
            let mut grads = Vec::with_capacity(part_lens.len());
            let mut offset = 0;
            for &len in &part_lens {
                let mut g = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    let src_start = (o * axis_total + offset) * inner;
                    g[o * len * inner..(o + 1) * len * inner]
                        .copy_from_slice(&args.grad_out[src_start..src_start + len * inner]);
                }
                grads.push(Some(g));
                offset += len;
            }
            grads
        }),
    )
}

/// Contiguous slice `[start, end)` along `axis`.
pub fn slice<T: Elem>(x: &Tensor<T>, axis: usize, start: usize, end: usize) -> Tensor<T> {
    let shape = x.shape();
    assert!(
        axis < shape.len() && start < end && end <= shape[axis],
        "slice dimension error: [{start}, {end}) on axis {axis} of shape {shape:?}"
    );
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let axis_len = shape[axis];
    let len = end - start;
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;

    let mut data = vec![T::zero(); outer * len * inner];
    for o in 0..outer {
        let src_start = (o * axis_len + start) * inner;
        data[o * len * inner..(o + 1) * len * inner]
            .copy_from_slice(&x.data()[src_start..src_start + len * inner]);
    }
    let in_numel = x.numel();
    Tensor::from_op(
        out_shape,
        data,
        vec![x.clone()],
        Box::new(move |args, _| {
            let mut dx = vec![T::zero(); in_numel];
            for o in 0..outer {
                let dst_start = (o * axis_len + start) * inner;
                dx[dst_start..dst_start + len * inner]
                    .copy_from_slice(&args.grad_out[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(dx)]
        }),
    )
}

// ── normalisation and reductions ───────────────────────────────────────

/// Numerically stable softmax along `axis`: the maximum is subtracted
/// before exponentiation, outputs lie in (0,1) and slices sum to 1.
pub fn softmax<T: Elem>(x: &Tensor<T>, axis: usize) -> Tensor<T> {
    let shape = x.shape();
    assert!(axis < shape.len(), "softmax dimension error: axis {axis} for shape {shape:?}");
    assert!(
        x.is_finite(),
        "softmax numeric input error: non-finite value in input of shape {shape:?}"
    );
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let n = shape[axis];

    let xd = x.data();
    let mut data = vec![T::zero(); xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut maxv = xd[base];
            for j in 1..n {
                let v = xd[base + j * inner];
                if v > maxv {
                    maxv = v;
                }
            }
            let mut sum = T::zero();
            for j in 0..n {
                let e = (xd[base + j * inner] - maxv).exp();
                data[base + j * inner] = e;
                sum = sum + e;
            }
            for j in 0..n {
                data[base + j * inner] = data[base + j * inner] / sum;
            }
        }
    }

    Tensor::from_op(
        shape.to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |args, _| {
            // dx = y ⊙ (g − Σ_axis g⊙y)
            let y = args.out_data;
            let g = args.grad_out;
            let mut dx = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    let mut dot = T::zero();
                    for j in 0..n {
                        let idx = base + j * inner;
                        dot = dot + g[idx] * y[idx];
                    }
                    for j in 0..n {
                        let idx = base + j * inner;
                        dx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
            }
            vec![Some(dx)]
        }),
    )
}

/// Normalise the last axis to zero mean and unit variance, then apply the
/// learned affine `gamma`, `beta` (both of length d). `eps` sits inside
/// the variance square root.
pub fn layer_norm<T: Elem>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Tensor<T> {
    let shape = x.shape();
    let d = *shape.last().expect("layer_norm on 0-d tensor");
    assert!(
        gamma.shape() == [d] && beta.shape() == [d],
        "layer_norm dimension error: x {:?}, gamma {:?}, beta {:?}",
        shape,
        gamma.shape(),
        beta.shape()
    );
    let rows = x.numel() / d;
    let epsv = T::from_f64(eps);
    let inv_d = T::from_f64(1.0 / d as f64);

    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    let mut data = vec![T::zero(); xd.len()];
    for r in 0..rows {
        let row = &xd[r * d..(r + 1) * d];
        let mut mean = T::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = T::zero();
        for &v in row {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let inv_std = T::one() / (var + epsv).sqrt();
        for j in 0..d {
            let xh = (row[j] - mean) * inv_std;
            data[r * d + j] = gd[j] * xh + bd[j];
        }
    }

    Tensor::from_op(
        shape.to_vec(),
        data,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |args, inputs| {
            let xd = inputs[0].data();
            let gd = inputs[1].data();
            let g = args.grad_out;
            let mut dx = vec![T::zero(); xd.len()];
            let mut dgamma = vec![T::zero(); d];
            let mut dbeta = vec![T::zero(); d];
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let grow = &g[r * d..(r + 1) * d];
                let mut mean = T::zero();
                for &v in row {
                    mean = mean + v;
                }
                mean = mean * inv_d;
                let mut var = T::zero();
                for &v in row {
                    let c = v - mean;
                    var = var + c * c;
                }
                var = var * inv_d;
                let inv_std = T::one() / (var + epsv).sqrt();

                // ghat = g·gamma; dx = (ghat − mean(ghat) − x̂·mean(ghat·x̂)) / std
                let mut mean_gh = T::zero();
                let mut mean_ghxh = T::zero();
                for j in 0..d {
                    let xh = (row[j] - mean) * inv_std;
                    let gh = grow[j] * gd[j];
                    mean_gh = mean_gh + gh;
                    mean_ghxh = mean_ghxh + gh * xh;
                    dgamma[j] = dgamma[j] + grow[j] * xh;
                    dbeta[j] = dbeta[j] + grow[j];
                }
                mean_gh = mean_gh * inv_d;
                mean_ghxh = mean_ghxh * inv_d;
                for j in 0..d {
                    let xh = (row[j] - mean) * inv_std;
                    let gh = grow[j] * gd[j];
                    dx[r * d + j] = (gh - mean_gh - xh * mean_ghxh) * inv_std;
                }
            }
            vec![Some(dx), Some(dgamma), Some(dbeta)]
        }),
    )
}

/// Sum of all elements, as a scalar tensor.
pub fn sum_all<T: Elem>(x: &Tensor<T>) -> Tensor<T> {
    let mut s = T::zero();
    for &v in x.data() {
        s = s + v;
    }
    let n = x.numel();
    Tensor::from_op(
        vec![1],
        vec![s],
        vec![x.clone()],
        Box::new(move |args, _| vec![Some(vec![args.grad_out[0]; n])]),
    )
}

/// Mean of all elements, as a scalar tensor.
pub fn mean_all<T: Elem>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.numel();
    assert!(n > 0, "mean of empty tensor");
    scale(&sum_all(x), 1.0 / n as f64)
}

// ── losses ────────────────────────────────────────────────────────────

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits` \[N×C\], with the log-softmax fused for stability.
pub fn cross_entropy<T: Elem>(logits: &Tensor<T>, targets: &[usize]) -> Tensor<T> {
    assert_eq!(logits.ndim(), 2, "cross_entropy dimension error: logits {:?}", logits.shape());
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    assert_eq!(
        targets.len(),
        n,
        "cross_entropy dimension error: {} targets for {} rows",
        targets.len(),
        n
    );
    for (i, &t) in targets.iter().enumerate() {
        assert!(t < c, "cross_entropy index error: target {t} at row {i} out of range for {c} classes");
    }

    let ld = logits.data();
    let mut loss = T::zero();
    for (i, &t) in targets.iter().enumerate() {
        let row = &ld[i * c..(i + 1) * c];
        let mut maxv = row[0];
        for &v in &row[1..] {
            if v > maxv {
                maxv = v;
            }
        }
        let mut sum = T::zero();
        for &v in row {
            sum = sum + (v - maxv).exp();
        }
        // −log softmax(row)[t] = logsumexp(row) − row[t]
        loss = loss + maxv + sum.ln() - row[t];
    }
    loss = loss / T::from_f64(n as f64);

    let targets = targets.to_vec();
    Tensor::from_op(
        vec![1],
        vec![loss],
        vec![logits.clone()],
        Box::new(move |args, inputs| {
            let ld = inputs[0].data();
            let scale = args.grad_out[0] / T::from_f64(n as f64);
            let mut dl = vec![T::zero(); ld.len()];
            for (i, &t) in targets.iter().enumerate() {
                let row = &ld[i * c..(i + 1) * c];
                let mut maxv = row[0];
                for &v in &row[1..] {
                    if v > maxv {
                        maxv = v;
                    }
                }
                let mut sum = T::zero();
                for &v in row {
                    sum = sum + (v - maxv).exp();
                }
                for j in 0..c {
                    let p = (row[j] - maxv).exp() / sum;
                    let ind = if j == t { T::one() } else { T::zero() };
                    dl[i * c + j] = (p - ind) * scale;
                }
            }
            vec![Some(dl)]
        }),
    )
}

// ── stochastic regularisation ─────────────────────────────────────────

/// Inverted dropout: keeps each element with probability `1 − rate` and
/// rescales by `1/(1 − rate)`. `rate == 0` is the identity.
pub fn dropout<T: Elem>(x: &Tensor<T>, rate: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    if rate <= 0.0 {
        return x.clone();
    }
    assert!(rate < 1.0, "dropout rate {rate} must be in [0, 1)");
    let keep = 1.0 - rate;
    let scale_v = T::from_f64(1.0 / keep);
    let mask: Vec<T> = (0..x.numel())
        .map(|_| if rng.gen::<f64>() < keep { scale_v } else { T::zero() })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |args, _| {
            vec![Some(args.grad_out.iter().zip(&mask).map(|(&g, &m)| g * m).collect())]
        }),
    )
}

// ── composed helpers ──────────────────────────────────────────────────

/// Affine map over the last axis: x \[…×in\] · w \[in×out\] + b \[out\].
pub fn linear<T: Elem>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let in_dim = *x.shape().last().expect("linear on 0-d tensor");
    assert!(
        w.ndim() == 2 && w.shape()[0] == in_dim,
        "linear dimension error: x {:?} w {:?}",
        x.shape(),
        w.shape()
    );
    let out_dim = w.shape()[1];
    let rows = x.numel() / in_dim;
    let flat = reshape(x, &[rows, in_dim]);
    let y = add(&matmul(&flat, w), b);
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = out_dim;
    reshape(&y, &out_shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn matmul_identity() {
        let eye = Tensor::<f64>::from_f64s(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = Tensor::<f64>::from_f64s(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let y = matmul(&eye, &m);
        assert_eq!(y.data(), m.data());
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let a = Tensor::<f64>::from_f64s(&[1, 2], &[1.0, 2.0]);
        let b = Tensor::<f64>::from_f64s(&[2, 1], &[3.0, 4.0]);
        let y = matmul(&a, &b);
        assert_eq!(y.shape(), [1, 1]);
        assert_eq!(y.item(), 11.0);
    }

    #[test]
    #[should_panic(expected = "matmul dimension error: [2, 3] x [2, 3]")]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        matmul(&a, &b);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let x = Tensor::<f64>::from_f64s(&[3], &[0.0, 0.0, 0.0]);
        let y = softmax(&x, 0);
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let x = Tensor::<f64>::from_f64s(&[2], &[1000.0, 0.0]);
        let y = softmax(&x, 0);
        assert!(y.is_finite());
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..10).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let x = Tensor::<f64>::from_f64s(&[2, 5], &data);
        let y = softmax(&x, 1);
        for r in 0..2 {
            let s: f64 = y.data()[r * 5..(r + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "row {r} sums to {s}");
        }
    }

    #[test]
    fn softmax_normalises_along_a_leading_axis() {
        let x = Tensor::<f64>::from_f64s(&[2, 3], &[1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
        let y = softmax(&x, 0);
        for col in 0..3 {
            let s = y.data()[col] + y.data()[3 + col];
            assert!((s - 1.0).abs() < 1e-12, "column {col} sums to {s}");
        }
    }

    #[test]
    #[should_panic(expected = "numeric input error")]
    fn softmax_rejects_non_finite_input() {
        let x = Tensor::<f64>::from_f64s(&[2], &[f64::NAN, 0.0]);
        softmax(&x, 0);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::<f64>::from_f64s(&[1, 4], &[5.0, 5.0, 5.0, 5.0]);
        let gamma = Tensor::<f64>::from_f64s(&[4], &[1.0; 4]);
        let beta = Tensor::<f64>::zeros(&[4]);
        let y = layer_norm(&x, &gamma, &beta, 1e-5);
        for &v in y.data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_zero_gamma_yields_beta() {
        let x = Tensor::<f64>::from_f64s(&[2, 3], &[1.0, -2.0, 0.5, 4.0, 4.5, -1.0]);
        let gamma = Tensor::<f64>::zeros(&[3]);
        let beta = Tensor::<f64>::from_f64s(&[3], &[0.7, 0.7, 0.7]);
        let y = layer_norm(&x, &gamma, &beta, 1e-5);
        for &v in y.data() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_peaked_logits_approach_zero() {
        let logits = Tensor::<f64>::from_f64s(&[1, 3], &[50.0, 0.0, 0.0]);
        let loss = cross_entropy(&logits, &[0]);
        assert!(loss.item() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_classes() {
        let logits = Tensor::<f64>::zeros(&[2, 38]);
        let loss = cross_entropy(&logits, &[0, 17]);
        assert!((loss.item() - (38.0f64).ln()).abs() < 1e-12);
        assert!((loss.item() - 3.6376).abs() < 1e-4);
    }

    #[test]
    #[should_panic(expected = "index error")]
    fn cross_entropy_rejects_out_of_range_target() {
        let logits = Tensor::<f64>::zeros(&[1, 3]);
        cross_entropy(&logits, &[3]);
    }

    #[test]
    fn dropout_is_identity_at_rate_zero_and_deterministic_under_seed() {
        let x = Tensor::<f64>::from_f64s(&[8], &[1.0; 8]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let y = dropout(&x, 0.0, &mut rng);
        assert_eq!(y.data(), x.data());

        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let y1 = dropout(&x, 0.5, &mut r1);
        let y2 = dropout(&x, 0.5, &mut r2);
        assert_eq!(y1.data(), y2.data());
    }

    #[test]
    fn linear_affine_maps_last_axis() {
        let x = Tensor::<f64>::from_f64s(&[2, 2, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let w = Tensor::<f64>::from_f64s(&[3, 2], &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        let b = Tensor::<f64>::from_f64s(&[2], &[0.5, -0.5]);
        let y = linear(&x, &w, &b);
        assert_eq!(y.shape(), [2, 2, 2]);
        assert_eq!(y.data()[0], 1.5); // row [1,0,0]
        assert_eq!(y.data()[1], 9.5);
        assert_eq!(y.data()[6], 6.5); // row [1,1,1]
        assert_eq!(y.data()[7], 59.5);
    }

    #[test]
    fn slice_concat_roundtrip_preserves_values() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::<f64>::from_f64s(&[2, 4, 3], &data);
        let a = slice(&x, 1, 0, 1);
        let b = slice(&x, 1, 1, 4);
        let y = concat(&[&a, &b], 1);
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn permute_transposes_batched_matrices() {
        let x = Tensor::<f64>::from_f64s(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = permute(&x, &[0, 2, 1]);
        assert_eq!(y.shape(), [1, 3, 2]);
        assert_eq!(y.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }
}
