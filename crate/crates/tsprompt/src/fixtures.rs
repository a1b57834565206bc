//! Synthetic datasets: random-walk prices on the trading-session grid with
//! template Japanese comments derived from the gold movement label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsprompt_core::{
    derive_gold_label, ClockTime, Continuation, Direction, MovementLabel, PriceSeries, SeriesKind, Split,
    TaskInstance, Timestamp, Yen,
};

use crate::error::Result;
use crate::formats::price_csv::DEFAULT_INDEX_NAME;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureConfig {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig { train: 40, valid: 10, test: 20, seed: 0 }
    }
}

/// Instances in split order (train, valid, test) with ids like `test-00003`.
pub fn generate_fixtures(config: &FixtureConfig) -> Result<Vec<TaskInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let times: Vec<ClockTime> = ClockTime::session_times().collect();
    let mut out = Vec::with_capacity(config.train + config.valid + config.test);
    for (split, count) in [(Split::Train, config.train), (Split::Valid, config.valid), (Split::Test, config.test)] {
        for n in 1..=count {
            out.push(one_instance(&mut rng, &times, format!("{}-{n:05}", split.as_str()), split)?);
        }
    }
    Ok(out)
}

fn step(rng: &mut ChaCha8Rng, price: i64, spread: i64) -> i64 {
    (price + rng.random_range(-spread..=spread)).max(10_000)
}

fn one_instance(rng: &mut ChaCha8Rng, times: &[ClockTime], id: String, split: Split) -> Result<TaskInstance> {
    // Hundredths of a yen throughout.
    let mut close = rng.random_range(800_000..2_000_000i64);
    let mut long = Vec::with_capacity(7);
    for days in (1..=7u32).rev() {
        close = step(rng, close, 20_000);
        long.push((Timestamp::days_ago(days)?, Yen::from_hundredths(close)));
    }
    let target_idx = match rng.random_range(0..10) {
        0..=3 => times.len() - 1,
        4..=6 => times.iter().position(|t| t.to_string() == "11:30").unwrap_or(0),
        _ => rng.random_range(0..times.len()),
    };
    let mut price = step(rng, close, 10_000);
    let mut short = Vec::with_capacity(target_idx + 1);
    for &t in &times[..=target_idx] {
        short.push((Timestamp::Clock(t), Yen::from_hundredths(price)));
        price = step(rng, price, 2_500);
    }
    let target = times[target_idx];
    let short = PriceSeries::new(SeriesKind::ShortTerm, short, DEFAULT_INDEX_NAME)?;
    let long = PriceSeries::new(SeriesKind::LongTerm, long, DEFAULT_INDEX_NAME)?;
    let current = short.points()[0].1;
    let draft = TaskInstance::new(id.clone(), target, short.clone(), long.clone(), "-", split)?;
    let gold = derive_gold_label(&draft)?;
    let comment = template_comment(&gold, target, current);
    Ok(TaskInstance::new(id, target, short, long, comment, split)?)
}

/// `日経平均、続伸 前引けは421円高の1万6349円` and similar.
pub fn template_comment(gold: &MovementLabel, target: ClockTime, current: Yen) -> String {
    let term = match (gold.direction, gold.continuation) {
        (Direction::Up, Continuation::Continuation) => "続伸",
        (Direction::Up, Continuation::Rebound) => "反発",
        (Direction::Up, Continuation::Unspecified) => "上昇",
        (Direction::Down, Continuation::Continuation) => "続落",
        (Direction::Down, Continuation::Rebound) => "反落",
        (Direction::Down, Continuation::Unspecified) => "下落",
        (Direction::Flat, _) => "横ばい",
    };
    let when = match (target.hour(), target.minute()) {
        (11, 30) => "前引けは".to_owned(),
        (15, 0) => "大引けは".to_owned(),
        (h, m) => format!("{h}時{m:02}分時点で"),
    };
    let level = man_yen(current.hundredths() / 100);
    let delta = gold.magnitude_yen.abs().hundredths() / 100;
    match gold.direction {
        Direction::Up => format!("日経平均、{term} {when}{delta}円高の{level}円"),
        Direction::Down => format!("日経平均、{term} {when}{delta}円安の{level}円"),
        Direction::Flat => format!("日経平均、{term} {when}{level}円"),
    }
}

fn man_yen(yen: i64) -> String {
    if yen >= 10_000 {
        format!("{}万{}", yen / 10_000, yen % 10_000)
    } else {
        yen.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::dataset::{parse_dataset_jsonl, write_dataset_jsonl};
    use tsprompt_core::consistency::check_magnitude_claims;
    use tsprompt_core::{judge, MovementLexicon, Verdict};

    #[test]
    fn deterministic_and_loadable() {
        let config = FixtureConfig { train: 30, valid: 5, test: 15, seed: 9 };
        let a = generate_fixtures(&config).unwrap();
        assert_eq!(a, generate_fixtures(&config).unwrap());
        assert_ne!(a, generate_fixtures(&FixtureConfig { seed: 10, ..config }).unwrap());
        let text = write_dataset_jsonl(&a);
        assert_eq!(parse_dataset_jsonl(&text, "fx").unwrap(), a);
    }

    #[test]
    fn references_agree_with_their_own_gold_label() {
        let lex = MovementLexicon::default();
        for inst in generate_fixtures(&FixtureConfig { train: 200, valid: 0, test: 0, seed: 1 }).unwrap() {
            let gold = derive_gold_label(&inst).unwrap();
            let verdict = judge(inst.reference_comment(), &gold, &lex);
            assert_ne!(verdict, Verdict::Inconsistent, "{}", inst.reference_comment());
            for claim in check_magnitude_claims(inst.reference_comment(), &gold, Yen::from_hundredths(100)) {
                assert!(claim.within_tolerance, "{}", inst.reference_comment());
            }
        }
    }

    #[test]
    fn man_formatting() {
        assert_eq!(man_yen(16349), "1万6349");
        assert_eq!(man_yen(20005), "2万5");
        assert_eq!(man_yen(9988), "9988");
    }
}
