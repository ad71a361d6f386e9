use ndarray::{ArrayView1, ArrayView2};

/// Pearson correlation; zero when either side has no variance.
pub fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Greedy minimum-redundancy maximum-relevance selection (difference form).
///
/// Relevance is `|r(f, y)|`, redundancy the mean `|r(f, g)|` over already
/// selected `g`. Returns up to `k` column indices in pick order; ties go to the
/// lower column index. Because the procedure is greedy, the result for `k` is
/// always a prefix of the result for any larger `k`.
pub fn mrmr_select(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, k: usize) -> Vec<usize> {
    let p = x.ncols();
    let k = k.min(p);
    if k == 0 {
        return Vec::new();
    }
    let relevance: Vec<f64> = (0..p).map(|j| pearson(x.column(j), y).abs()).collect();
    let mut redundancy = vec![0.0; p];
    let mut chosen = vec![false; p];
    let mut order = Vec::with_capacity(k);

    let first = argmax((0..p).map(|j| (j, relevance[j])));
    order.push(first);
    chosen[first] = true;
    while order.len() < k {
        let last = *order.last().expect("non-empty");
        for j in (0..p).filter(|&j| !chosen[j]) {
            redundancy[j] += pearson(x.column(j), x.column(last)).abs();
        }
        let s = order.len() as f64;
        let next = argmax(
            (0..p)
                .filter(|&j| !chosen[j])
                .map(|j| (j, relevance[j] - redundancy[j] / s)),
        );
        order.push(next);
        chosen[next] = true;
    }
    order
}

fn argmax(scores: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.expect("at least one candidate").0
}
