//! Templated toy corpus for smoke training runs.
//!
//! Every entity owns a passage of five sentences, one per relation template. Each question has
//! its true sentence as the positive row and three negatives: two other sentences of the same
//! passage and one sentence of a second passage.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::text_data::{tokenize, QAPair};

pub const NUM_TEMPLATES: usize = 5;

#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub train: Vec<QAPair>,
    pub dev: Vec<QAPair>,
}

struct Entity {
    name: String,
    capital: String,
    founder: String,
    year: u32,
    population: u32,
    language: String,
}

impl Entity {
    /// `(question, answer)` text for relation `r`.
    fn fact(&self, r: usize) -> (String, String) {
        let e = &self.name;
        match r {
            0 => (
                format!("what is the capital of {e} ?"),
                format!("the capital of {e} is {} .", self.capital),
            ),
            1 => (
                format!("who founded {e} ?"),
                format!("{e} was founded by {} .", self.founder),
            ),
            2 => (
                format!("when was {e} established ?"),
                format!("{e} was established in {} .", self.year),
            ),
            3 => (
                format!("how many people live in {e} ?"),
                format!("about {} thousand people live in {e} .", self.population),
            ),
            _ => (
                format!("what language is spoken in {e} ?"),
                format!("people in {e} speak {} .", self.language),
            ),
        }
    }
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ra", "ten", "vo", "zu", "bel", "dor", "fi", "gan", "hu", "ni", "pa", "sol", "tri",
];

fn word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
        .collect()
}

fn entities<R: Rng>(rng: &mut R, n: usize) -> Vec<Entity> {
    let languages: Vec<String> = (0..6).map(|_| format!("{}ish", word(rng, 2))).collect();
    let mut names = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let name = word(rng, 3);
        if !names.insert(name.clone()) {
            continue;
        }
        out.push(Entity {
            name,
            capital: word(rng, 2),
            founder: word(rng, 2),
            year: rng.gen_range(1100..2000),
            population: rng.gen_range(2..900),
            language: languages.choose(rng).expect("non-empty").clone(),
        });
    }
    out
}

fn rows<R: Rng>(rng: &mut R, split: &str, entities: &[Entity]) -> Result<Vec<QAPair>> {
    let mut out = Vec::with_capacity(entities.len() * NUM_TEMPLATES * 4);
    for (i, e) in entities.iter().enumerate() {
        let passage = format!("{split}-p{i}");
        for r in 0..NUM_TEMPLATES {
            let qid = format!("{split}-q{}", i * NUM_TEMPLATES + r);
            let (q, a) = e.fact(r);
            let q = tokenize(&q)?;
            out.push(QAPair::new(&qid, q.clone(), tokenize(&a)?, &passage, 1)?);

            let mut others: Vec<usize> = (0..NUM_TEMPLATES).filter(|&o| o != r).collect();
            others.shuffle(rng);
            for &o in &others[..2] {
                out.push(QAPair::new(&qid, q.clone(), tokenize(&e.fact(o).1)?, &passage, 0)?);
            }
            let mut j = rng.gen_range(0..entities.len() - 1);
            if j >= i {
                j += 1;
            }
            let sentence = entities[j].fact(rng.gen_range(0..NUM_TEMPLATES)).1;
            out.push(QAPair::new(&qid, q, tokenize(&sentence)?, format!("{split}-p{j}"), 0)?);
        }
    }
    Ok(out)
}

/// `train_questions` and `dev_questions` must be positive multiples of five.
pub fn toy_corpus(train_questions: usize, dev_questions: usize, seed: u64) -> Result<ToyCorpus> {
    for n in [train_questions, dev_questions] {
        if n == 0 || n % NUM_TEMPLATES != 0 || n / NUM_TEMPLATES < 2 {
            return Err(Error::InvalidArgument(format!(
                "question count {n} must be a multiple of {NUM_TEMPLATES} covering at least two passages"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = entities(&mut rng, (train_questions + dev_questions) / NUM_TEMPLATES);
    let (train_e, dev_e) = all.split_at(train_questions / NUM_TEMPLATES);
    Ok(ToyCorpus {
        train: rows(&mut rng, "train", train_e)?,
        dev: rows(&mut rng, "dev", dev_e)?,
    })
}
