//! Reference HDBSCAN pieces built without spanning trees or union-find.

/// Pairwise Euclidean distances.
pub fn distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()).collect())
        .collect()
}

pub fn mutual_reachability(points: &[Vec<f64>], min_samples: usize) -> Vec<Vec<f64>> {
    let d = distances(points);
    let n = points.len();
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[i][j]).collect();
            row.sort_by(f64::total_cmp);
            row[min_samples - 1]
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { d[i][j].max(core[i]).max(core[j]) }).collect()).collect()
}

/// Minimum spanning-tree weight by enumerating every labeled tree through
/// its Pruefer sequence.
pub fn brute_force_mst_weight(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    if n == 2 {
        return w[0][1];
    }
    let mut best = f64::INFINITY;
    let mut seq = vec![0usize; n - 2];
    loop {
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut total = 0.0;
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            total += w[leaf][s];
            degree[leaf] = 0;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        total += w[rest[0]][rest[1]];
        best = best.min(total);

        let mut k = 0;
        while k < seq.len() {
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
        if k == seq.len() {
            return best;
        }
    }
}

fn components(set: &[usize], w: &[Vec<f64>], below: f64) -> Vec<Vec<usize>> {
    let mut seen = vec![false; set.len()];
    let mut out = Vec::new();
    for start in 0..set.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut k = 0;
        while k < comp.len() {
            let a = set[comp[k]];
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && w[a][set[j]] < below {
                    *s = true;
                    comp.push(j);
                }
            }
            k += 1;
        }
        out.push(comp.into_iter().map(|i| set[i]).collect());
    }
    out
}

/// Smallest level at which `set` is connected.
fn merge_level(set: &[usize], w: &[Vec<f64>]) -> f64 {
    let mut levels: Vec<f64> = set
        .iter()
        .flat_map(|&a| set.iter().map(move |&b| (a, b)))
        .filter(|(a, b)| a < b)
        .map(|(a, b)| w[a][b])
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    *levels
        .iter()
        .find(|&&l| components(set, w, f64::from_bits(l.to_bits() + 1)).len() == 1)
        .expect("complete graph connects at its largest weight")
}

struct Fall {
    point: usize,
    cluster: usize,
    lambda: f64,
}

fn split(set: Vec<usize>, cluster: usize, w: &[Vec<f64>], mcs: usize, falls: &mut Vec<Fall>, parents: &mut Vec<usize>) {
    let level = merge_level(&set, w);
    let lambda = if level > 0.0 { 1.0 / level } else { f64::INFINITY };
    let parts = components(&set, w, level);
    let big: Vec<Vec<usize>> = parts.iter().filter(|p| p.len() >= mcs).cloned().collect();
    for part in parts.iter().filter(|p| p.len() < mcs) {
        falls.extend(part.iter().map(|&point| Fall { point, cluster, lambda }));
    }
    match big.len() {
        0 => {}
        1 => split(big[0].clone(), cluster, w, mcs, falls, parents),
        _ => {
            for part in big {
                parents.push(cluster);
                let id = parents.len() - 1;
                split(part, id, w, mcs, falls, parents);
            }
        }
    }
}

/// GLOSH from its definition on the level-set hierarchy of `w`.
pub fn reference_glosh(w: &[Vec<f64>], mcs: usize) -> Vec<f64> {
    let n = w.len();
    let mut falls = Vec::new();
    let mut parents = vec![usize::MAX];
    split((0..n).collect(), 0, w, mcs, &mut falls, &mut parents);
    let is_below = |mut c: usize, ancestor: usize| loop {
        if c == ancestor {
            return true;
        }
        if c == 0 {
            return false;
        }
        c = parents[c];
    };
    let mut scores = vec![f64::NAN; n];
    for f in &falls {
        let lambda_max = falls.iter().filter(|g| is_below(g.cluster, f.cluster)).map(|g| g.lambda).fold(0.0, f64::max);
        scores[f.point] = if f.lambda.is_infinite() || lambda_max == 0.0 {
            0.0
        } else if lambda_max.is_infinite() {
            1.0
        } else {
            1.0 - f.lambda / lambda_max
        };
    }
    scores
}
