use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[inline]
fn dist_sq<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Farthest-point sampling starting from index 0. Each pick maximises the
/// distance to the already picked set, lowest index on ties. When `n`
/// exceeds the number of points the picked order repeats cyclically.
pub fn farthest_point_sample<T: Scalar>(xyz: &[[T; 3]], n: usize) -> Result<Vec<usize>> {
    if xyz.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let distinct = n.min(xyz.len());
    let mut picked = vec![false; xyz.len()];
    let mut min_d = vec![T::infinity(); xyz.len()];
    let mut order = Vec::with_capacity(n);
    let mut current = 0usize;
    for _ in 0..distinct {
        order.push(current);
        picked[current] = true;
        let c = xyz[current];
        let mut best: Option<(usize, T)> = None;
        for (i, p) in xyz.iter().enumerate() {
            let d = dist_sq(p, &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if !picked[i] && best.is_none_or(|(_, bd)| min_d[i] > bd) {
                best = Some((i, min_d[i]));
            }
        }
        match best {
            Some((i, _)) => current = i,
            None => break,
        }
    }
    let cycle = order.clone();
    order.extend(cycle.iter().cycle().take(n - distinct));
    Ok(order)
}

/// For each center (an index into `xyz`), the up-to-`m` nearest points within
/// `radius`, nearest first with index as tie-break. Short groups are padded by
/// repeating their nearest member; a group with no qualifying member is filled
/// with the center itself.
pub fn ball_query_group<T: Scalar>(xyz: &[[T; 3]], centers: &[usize], radius: T, m: usize) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    centers
        .iter()
        .map(|&c| {
            let center = xyz[c];
            let mut cand: Vec<(T, usize)> = xyz
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let d = dist_sq(p, &center);
                    (d <= r2).then_some((d, i))
                })
                .collect();
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
            let mut group: Vec<usize> = cand.iter().take(m).map(|&(_, i)| i).collect();
            let pad = group.first().copied().unwrap_or(c);
            group.resize(m, pad);
            group
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fps_collinear() {
        let xyz: Vec<[f64; 3]> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert_eq!(farthest_point_sample(&xyz, 2).unwrap(), vec![0, 3]);
        let all = farthest_point_sample(&xyz, 4).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert_eq!(all, farthest_point_sample(&xyz, 4).unwrap());
    }

    #[test]
    fn fps_cycles_and_handles_duplicates() {
        let xyz = vec![[0.0, 0.0, 0.0]; 3];
        assert_eq!(farthest_point_sample(&xyz, 3).unwrap(), vec![0, 1, 2]);
        let two = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(farthest_point_sample(&two, 5).unwrap(), vec![0, 1, 0, 1, 0]);
        assert_eq!(farthest_point_sample::<f64>(&[], 2), Err(Error::EmptyCloud));
    }

    #[test]
    fn ball_query_nearest_within_radius() {
        let xyz = vec![[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.9], [0.2, 0.0, 0.0]];
        let g = ball_query_group(&xyz, &[0], 0.5, 3);
        assert_eq!(g, vec![vec![0, 2, 4]]);
        let g = ball_query_group(&xyz, &[0], 0.5, 6);
        assert_eq!(g, vec![vec![0, 2, 4, 1, 0, 0]]);
    }

    #[test]
    fn isolated_center_repeats_itself() {
        let xyz = vec![[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]];
        assert_eq!(ball_query_group(&xyz, &[1], 0.5, 4), vec![vec![1; 4]]);
    }

    #[test]
    fn everything_in_radius() {
        let xyz = vec![[0.0, 0.0, 0.0], [0.2, 0.0, 0.0], [0.1, 0.0, 0.0]];
        assert_eq!(ball_query_group(&xyz, &[0], 1.0, 4), vec![vec![0, 2, 1, 0]]);
    }
}
