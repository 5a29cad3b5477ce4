//! Binary genetic algorithm with elitism.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mathcore::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population: usize,
    /// Per-bit flip probability; `None` means `1 / length`.
    pub mutation_rate: Option<f64>,
    pub crossover_rate: f64,
    pub elitism: usize,
    pub generations: usize,
    pub tournament: usize,
    /// Single-bit hill-climbing sweeps applied to the final best individual.
    pub polish_sweeps: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 64,
            mutation_rate: None,
            crossover_rate: 0.7,
            elitism: 2,
            generations: 200,
            tournament: 2,
            polish_sweeps: 2,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(domain("GA population must be at least 2"));
        }
        if self.elitism > self.population {
            return Err(domain("elitism cannot exceed the population"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(domain("crossover rate must lie in [0, 1]"));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return Err(domain("mutation rate must lie in [0, 1]"));
            }
        }
        if self.tournament == 0 {
            return Err(domain("tournament size must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaResult {
    pub best: Vec<bool>,
    pub best_fitness: f64,
    /// Best fitness after each generation, starting with the initial
    /// population.
    pub history: Vec<f64>,
}

/// Maximizes `fitness` over bit strings of length `len`.
///
/// Tournament selection, single-point crossover, per-bit mutation. The top
/// `elitism` individuals survive unchanged, so the best fitness never drops.
/// The winner is finally polished by single-bit flips that strictly improve it.
pub fn evolve<F>(len: usize, params: &GaParams, fitness: F, stream: &mut RandomStream) -> Result<GaResult>
where
    F: Fn(&[bool]) -> f64,
{
    evolve_seeded(len, params, &[], fitness, stream)
}

/// [`evolve`] with part of the initial population given; the rest is random.
pub fn evolve_seeded<F>(
    len: usize,
    params: &GaParams,
    seeds: &[Vec<bool>],
    fitness: F,
    stream: &mut RandomStream,
) -> Result<GaResult>
where
    F: Fn(&[bool]) -> f64,
{
    params.validate()?;
    if len == 0 {
        return Err(domain("GA needs a positive sequence length"));
    }
    if seeds.len() > params.population || seeds.iter().any(|s| s.len() != len) {
        return Err(domain("GA seeds must fit the population and sequence length"));
    }
    let rate = params.mutation_rate.unwrap_or(1.0 / len as f64);
    let mut pop: Vec<Vec<bool>> = seeds.to_vec();
    while pop.len() < params.population {
        pop.push((0..len).map(|_| stream.coin()).collect());
    }
    let mut fit: Vec<f64> = pop.iter().map(|g| fitness(g)).collect();
    let mut history = Vec::with_capacity(params.generations + 1);
    let ranked = |fit: &[f64]| {
        let mut idx: Vec<usize> = (0..fit.len()).collect();
        idx.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]));
        idx
    };
    history.push(fit[ranked(&fit)[0]]);
    for _ in 0..params.generations {
        let order = ranked(&fit);
        let mut next: Vec<Vec<bool>> = order[..params.elitism].iter().map(|&i| pop[i].clone()).collect();
        let pick = |stream: &mut RandomStream| {
            let mut best = stream.below(pop.len());
            for _ in 1..params.tournament {
                let c = stream.below(pop.len());
                if fit[c] > fit[best] {
                    best = c;
                }
            }
            best
        };
        while next.len() < params.population {
            let (p, q) = (pick(stream), pick(stream));
            let (mut c1, mut c2) = (pop[p].clone(), pop[q].clone());
            if len > 1 && stream.uniform() < params.crossover_rate {
                let cut = 1 + stream.below(len - 1);
                c1[cut..].copy_from_slice(&pop[q][cut..]);
                c2[cut..].copy_from_slice(&pop[p][cut..]);
            }
            for c in [&mut c1, &mut c2] {
                for bit in c.iter_mut() {
                    if stream.uniform() < rate {
                        *bit = !*bit;
                    }
                }
            }
            next.push(c1);
            if next.len() < params.population {
                next.push(c2);
            }
        }
        // elites keep their score; only offspring are evaluated
        let mut next_fit: Vec<f64> = order[..params.elitism].iter().map(|&i| fit[i]).collect();
        next_fit.extend(next[params.elitism..].iter().map(|g| fitness(g)));
        pop = next;
        fit = next_fit;
        history.push(fit[ranked(&fit)[0]]);
    }
    let top = ranked(&fit)[0];
    let (mut best, mut best_fitness) = (pop[top].clone(), fit[top]);
    for _ in 0..params.polish_sweeps {
        let mut improved = false;
        for i in 0..len {
            best[i] = !best[i];
            let f = fitness(&best);
            if f > best_fitness {
                best_fitness = f;
                improved = true;
            } else {
                best[i] = !best[i];
            }
        }
        if !improved {
            break;
        }
    }
    Ok(GaResult {
        best,
        best_fitness,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(g: &[bool]) -> f64 {
        g.iter().filter(|&&b| b).count() as f64
    }

    #[test]
    fn history_never_decreases() {
        let mut s = RandomStream::new(2, 0);
        let r = evolve(64, &GaParams::default(), ones, &mut s).unwrap();
        assert_eq!(r.history.len(), 201);
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.best_fitness, ones(&r.best));
        assert!(r.best_fitness >= 60.0);
    }

    #[test]
    fn zero_elitism_is_allowed_but_may_regress() {
        let mut s = RandomStream::new(2, 0);
        let p = GaParams {
            elitism: 0,
            generations: 20,
            ..GaParams::default()
        };
        assert!(evolve(16, &p, ones, &mut s).is_ok());
    }

    #[test]
    fn bad_params_rejected() {
        let mut s = RandomStream::new(2, 0);
        let p = GaParams {
            population: 1,
            ..GaParams::default()
        };
        assert!(evolve(8, &p, ones, &mut s).is_err());
        assert!(evolve(0, &GaParams::default(), ones, &mut s).is_err());
    }
}
