//! Writes the synthetic tuning fixture: 30 documents and 40 questions.
//!
//! Every question asks for one attribute of one entity and is answered by a
//! single short fact sentence in its gold document. The rest of each
//! document is filler that mentions other entities and attribute words far
//! apart, so long chunks match many questions about equally well while
//! chunks close to the length of a fact sentence isolate the answer.
//!
//! Usage: `cargo run -p ragtuner --example synthetic_fixture -- OUT_DIR`

use std::fs;
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SEED: u64 = 20_240_917;
const DOCS: usize = 30;
const QUESTIONS: usize = 40;
const FILLER_SENTENCES: usize = 34;

const ATTRIBUTES: [&str; 8] = ["color", "emblem", "river", "founder", "anthem", "harbor", "festival", "mineral"];

const FILLER: [&str; 48] = [
    "market", "bridge", "winter", "lantern", "road", "garden", "stone", "tower", "merchant", "valley",
    "season", "village", "window", "bell", "field", "orchard", "mill", "square", "path", "roof",
    "wagon", "cloud", "meadow", "well", "chapel", "gate", "forest", "shore", "hill", "bread",
    "candle", "rope", "barrel", "fence", "ladder", "cart", "hearth", "loom", "kettle", "basket",
    "trail", "cellar", "pond", "quarry", "stable", "tavern", "archive", "canal",
];

const SYLLABLES: [&str; 16] =
    ["var", "nok", "tel", "zi", "mur", "quo", "ban", "dre", "lis", "oth", "kai", "rem", "sul", "fen", "gor", "pax"];

fn name(rng: &mut ChaCha8Rng, taken: &mut Vec<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let mut s: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect();
        if !taken.contains(&s) {
            taken.push(s.clone());
            let first = s.remove(0).to_ascii_uppercase();
            return format!("{first}{s}");
        }
    }
}

fn filler_sentence(rng: &mut ChaCha8Rng, mention: Option<String>) -> String {
    let len = rng.random_range(6..=10);
    let mut words: Vec<String> = (0..len).map(|_| FILLER.choose(rng).expect("nonempty").to_string()).collect();
    if let Some(m) = mention {
        let at = rng.random_range(0..words.len());
        words.insert(at, m);
    }
    let mut s = words.join(" ");
    s.push('.');
    let first = s.remove(0).to_ascii_uppercase();
    format!("{first}{s}")
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/synthetic".into()));
    fs::create_dir_all(&out).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut taken = Vec::new();
    let entities: Vec<String> = (0..DOCS).map(|_| name(&mut rng, &mut taken)).collect();

    // question i asks about entity i mod DOCS; the first ten entities get a
    // second question about a different attribute
    let mut questions = Vec::new();
    let mut facts: Vec<Vec<String>> = vec![Vec::new(); DOCS];
    for i in 0..QUESTIONS {
        let e = i % DOCS;
        let attr = ATTRIBUTES[(i * 3 + i / DOCS) % ATTRIBUTES.len()];
        let value = name(&mut rng, &mut taken).to_lowercase();
        facts[e].push(format!("The {attr} of {} is {value}.", entities[e]));
        questions.push(json!({
            "qid": format!("q{i:02}"),
            "question": format!("What is the {attr} of {}?", entities[e]),
            "answer": value,
            "gold_passages": [format!("doc{e:02}")],
        }));
    }

    let mut corpus = String::new();
    for (d, doc_facts) in facts.iter().enumerate() {
        let mut sentences: Vec<String> = (0..FILLER_SENTENCES)
            .map(|s| {
                // alternate entity mentions and attribute words in separate
                // sentences so no filler sentence pairs them
                let mention = match s % 3 {
                    0 => Some(entities[rng.random_range(0..DOCS)].clone()),
                    1 => Some(ATTRIBUTES.choose(&mut rng).expect("nonempty").to_string()),
                    _ => None,
                };
                filler_sentence(&mut rng, mention)
            })
            .collect();
        sentences.shuffle(&mut rng);
        for f in doc_facts {
            let at = rng.random_range(0..=sentences.len());
            sentences.insert(at, f.clone());
        }
        let line = json!({"doc_id": format!("doc{d:02}"), "text": sentences.join(" ")});
        corpus.push_str(&line.to_string());
        corpus.push('\n');
    }
    let mut qtext = String::new();
    for q in &questions {
        qtext.push_str(&q.to_string());
        qtext.push('\n');
    }
    fs::write(out.join("corpus.jsonl"), corpus).expect("write corpus");
    fs::write(out.join("questions.jsonl"), qtext).expect("write questions");
    eprintln!("wrote {DOCS} documents and {QUESTIONS} questions to {}", out.display());
}
