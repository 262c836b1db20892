use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::layer::Model;

use super::scores::{hinf_scores, prefix_normalize};

/// Prune `budget` states one unit at a time, recomputing LAST over the
/// surviving states of each layer after every step. Returns the pruning
/// decisions in order, one entry per state.
pub fn greedy_last_trace(model: &Model, budget: usize) -> Result<Vec<(usize, usize)>> {
    let hinf = model.layers.iter().map(hinf_scores).collect::<Result<Vec<_>>>()?;
    let mut units: Vec<Vec<Vec<usize>>> = model.layers.iter().map(|l| l.units()).collect();
    let available: usize = units
        .iter()
        .zip(&hinf)
        .map(|(us, h)| {
            let (_, rank, _) = prefix_normalize(h, us);
            let top = rank.first().map_or(0, |&i| us.iter().find(|u| u.contains(&i)).map_or(1, Vec::len));
            h.len() - top
        })
        .sum();
    if budget > available {
        return Err(Error::BudgetTooLarge { requested: budget, available });
    }
    let mut trace = Vec::with_capacity(budget);
    while trace.len() < budget {
        let left = budget - trace.len();
        let mut best: Option<(f64, usize, usize)> = None;
        for (l, us) in units.iter().enumerate() {
            if us.len() < 2 {
                continue;
            }
            let (last, _, _) = prefix_normalize(&hinf[l], us);
            for (k, u) in us.iter().enumerate() {
                if u.len() > left {
                    continue;
                }
                let cand = (last[u[0]], l, k);
                let better = match best {
                    None => true,
                    Some((s, bl, bk)) => match cand.0.partial_cmp(&s).unwrap_or(Ordering::Equal) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => (l, u[0]) < (bl, units[bl][bk][0]),
                    },
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let Some((_, l, k)) = best else { break };
        let unit = units[l].remove(k);
        trace.extend(unit.into_iter().map(|i| (l, i)));
    }
    Ok(trace)
}
