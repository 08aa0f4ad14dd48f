//! Deterministic fixture generators: synthetic feeds and expert ratings, the
//! skewed agreement fixture, and the CJ CGV June 2023 sample with its
//! recorded gateway cassette.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::dossier::{build_dossiers, CompanySummary, DisclosureSummary, Month};
use crate::evaluation::HumanAssessment;
use crate::gateway::{summary_request, Cassette};
use crate::ingest::{filter_timely, parse_feed, CompanyId, FeedFormat, IngestConfig};
use crate::rating::{build_rating_prompt, render_rating, RatingRecord, Rubric, Score, SentimentRating};

pub const DEFAULT_SEED: u64 = 20_230_630;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub companies: usize,
    pub from: Month,
    pub to: Month,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            companies: 50,
            from: Month::new(2022, 1).expect("valid"),
            to: Month::new(2023, 5).expect("valid"),
            seed: DEFAULT_SEED,
        }
    }
}

const NAME_HEADS: [&str; 10] = [
    "Daehan", "Hanbit", "Seorin", "Mirae", "Taeyang", "Gwangmyeong", "Noeul", "Saebom", "Cheongun", "Haneul",
];
const NAME_TAILS: [&str; 5] = ["Chemical", "Motors", "Bio", "Holdings", "Electronics"];

/// `n` invented listed companies with six-digit codes.
pub fn companies(n: usize) -> Vec<(CompanyId, String)> {
    (0..n)
        .map(|i| {
            let name = format!(
                "{} {}",
                NAME_HEADS[i % NAME_HEADS.len()],
                NAME_TAILS[(i / NAME_HEADS.len()) % NAME_TAILS.len()]
            );
            let name = if i >= NAME_HEADS.len() * NAME_TAILS.len() {
                format!("{name} {}", i / 50 + 1)
            } else {
                name
            };
            (CompanyId::new(format!("{:06}", 100_000 + 20 * i)), name)
        })
        .collect()
}

const EVENTS: [(&str, &str); 10] = [
    ("Loan Decision", "a loan of {amt} million KRW to a subsidiary"),
    ("Acquisition of Treasury Shares", "a buyback of treasury shares worth {amt} million KRW"),
    ("Provisional Earnings Announcement", "provisional quarterly operating profit of {amt} million KRW"),
    ("Single Sales and Supply Contract", "a supply contract worth {amt} million KRW"),
    ("Change in Largest Shareholder", "a change of its largest shareholder after a block sale of {amt} million KRW"),
    ("Rights Issue Decision", "a rights issue raising {amt} million KRW"),
    ("Lawsuit Filed", "a lawsuit claiming {amt} million KRW in damages"),
    ("Cash Dividend Decision", "a cash dividend totalling {amt} million KRW"),
    ("New Facility Investment", "a facility investment of {amt} million KRW"),
    ("Disposal of Tangible Assets", "the disposal of a plant for {amt} million KRW"),
];

struct FeedLine {
    key: (String, String),
    value: serde_json::Value,
}

fn with_commas(v: u32) -> String {
    let digits = v.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn periodic_for(month: u32) -> Option<(&'static str, &'static str)> {
    match month {
        3 => Some(("Business Report", "Business Report")),
        5 | 11 => Some(("Quarterly Report", "Quarterly Report")),
        8 => Some(("Semi-Annual Report", "Semi-Annual Report")),
        _ => None,
    }
}

/// A JSON-lines feed covering every company and month of `spec`, in
/// chronological order. Roughly 4% of company-months carry no timely
/// disclosure and about 8% exceed the recency cap. Periodic reports are
/// mixed in.
pub fn synthetic_feed(spec: &SynthSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let months = Month::range_inclusive(spec.from, spec.to);
    let mut lines = Vec::new();
    for (ci, (id, name)) in companies(spec.companies).iter().enumerate() {
        for (mi, month) in months.iter().enumerate() {
            let roll = rng.gen_range(0..100);
            let forced_empty = ci % 10 == 4 && mi == (ci * 7) % months.len();
            let n = if forced_empty || roll < 4 {
                0
            } else if roll < 12 {
                rng.gen_range(16..=24)
            } else {
                rng.gen_range(1..=8)
            };
            let mut push = |day: u32, hour: u32, minute: u32, title: String, body: String, category: Option<&str>| {
                let date = format!("{}-{:02}-{day:02}", month.year(), month.month());
                let time = format!("{hour:02}:{minute:02}");
                let mut value = json!({
                    "company_id": id,
                    "company_name": name,
                    "date": date,
                    "time": time,
                    "title": title,
                    "body": body,
                });
                if let Some(c) = category {
                    value["category"] = json!(c);
                }
                lines.push(FeedLine {
                    key: (date, time),
                    value,
                });
            };
            for _ in 0..n {
                let (title, phrase) = EVENTS[rng.gen_range(0..EVENTS.len())];
                let amt = with_commas(rng.gen_range(50..50_000u32));
                let (day, hour, minute) = (rng.gen_range(1..=28), rng.gen_range(8..=18), rng.gen_range(0..60));
                let body = format!(
                    "{name} disclosed {} on {}-{:02}-{day:02}. The board approved the matter the same day. \
                     Further details are in the attached filing.",
                    phrase.replace("{amt}", &amt),
                    month.year(),
                    month.month()
                );
                push(day, hour, minute, title.to_string(), body, Some("timely"));
            }
            if let Some((category, title)) = periodic_for(month.month()) {
                if rng.gen_bool(0.9) {
                    let day = rng.gen_range(10..=28);
                    let body = format!("{name} filed its {} for the period. ", title.to_lowercase()).repeat(40);
                    push(day, 17, 30, format!("{title} ({})", month), body, Some(category));
                }
            }
            if rng.gen_range(0..100) < 3 {
                push(
                    rng.gen_range(1..=28),
                    9,
                    0,
                    "Fair Report (Investor Relations)".into(),
                    format!("{name} will hold an investor briefing."),
                    Some("Fair Report"),
                );
            }
        }
    }
    lines.sort_by(|a, b| a.key.cmp(&b.key));
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.value.to_string());
        out.push('\n');
    }
    out
}

const EXPERT_BASE: [u8; 16] = [1, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 4, 4, 4, 5, 5];

/// Two expert scores per key, from a hash of the key. About a quarter of the
/// pairs disagree by one point.
pub fn synthetic_humans(keys: impl IntoIterator<Item = (CompanyId, Month)>, seed: u64) -> Vec<HumanAssessment> {
    keys.into_iter()
        .map(|(company, month)| {
            let digest = Sha256::digest(format!("{seed}\u{0}{company}\u{0}{month}").as_bytes());
            let e1 = EXPERT_BASE[usize::from(digest[0] % 16)];
            let e2 = match (digest[1] % 4, e1) {
                (0, 5) => 4,
                (0, v) => v + 1,
                _ => e1,
            };
            HumanAssessment::new(company, month, score(e1), score(e2))
        })
        .collect()
}

fn score(v: u8) -> Score {
    Score::new(v).expect("generator stays in range")
}

/// (human consensus, model score, count). 815 pairs, 615 human 3s; the
/// model reads one point high on positive months.
pub const SKEW_BLOCKS: [(u8, u8, usize); 9] = [
    (1, 1, 15),
    (1, 2, 5),
    (2, 2, 55),
    (2, 3, 5),
    (3, 3, 520),
    (3, 4, 95),
    (4, 5, 80),
    (4, 4, 10),
    (5, 5, 30),
];

pub const SKEW_MODEL: &str = "skew-model";

#[derive(Debug, Clone, PartialEq)]
pub struct SkewedFixture {
    pub ratings: Vec<RatingRecord>,
    pub humans: Vec<HumanAssessment>,
}

/// Spreads [`SKEW_BLOCKS`] over 815 of the 850 default company-months in a
/// seeded order. Every third pair with consensus below 5 has experts one
/// point apart.
pub fn skewed_fixture() -> SkewedFixture {
    let spec = SynthSpec::default();
    let months = Month::range_inclusive(spec.from, spec.to);
    let slots: Vec<(CompanyId, String, Month)> = companies(spec.companies)
        .into_iter()
        .flat_map(|(id, name)| months.iter().map(move |m| (id.clone(), name.clone(), *m)))
        .enumerate()
        .filter(|(i, _)| (i * 35) % 850 >= 35)
        .map(|(_, slot)| slot)
        .collect();

    let mut pairs: Vec<(u8, u8)> = SKEW_BLOCKS
        .iter()
        .flat_map(|&(h, m, n)| std::iter::repeat((h, m)).take(n))
        .collect();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(815));
    assert_eq!(pairs.len(), slots.len());

    let mut fixture = SkewedFixture {
        ratings: Vec::with_capacity(pairs.len()),
        humans: Vec::with_capacity(pairs.len()),
    };
    for (i, ((company, name, month), (h, m))) in slots.into_iter().zip(pairs).enumerate() {
        let (e1, e2) = if i % 3 == 0 && h < 5 { (h, h + 1) } else { (h, h) };
        fixture
            .humans
            .push(HumanAssessment::new(company.clone(), month, score(e1), score(e2)));
        let rationale = "Synthetic skewed fixture.".to_string();
        fixture.ratings.push(RatingRecord::Rated(SentimentRating {
            company_id: company,
            company_name: name,
            month,
            score: score(m),
            raw_response: render_rating(score(m), &rationale),
            rationale,
            model_id: SKEW_MODEL.into(),
        }));
    }
    fixture
}

/// One JSON object per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("fixture types serialize"));
        out.push('\n');
    }
    out
}

pub const CJ_CGV_ID: &str = "079160";
pub const CJ_CGV_NAME: &str = "CJ CGV";
pub const CJ_SUMMARY_MODEL: &str = "gpt-3.5-turbo";
pub const CJ_RATING_MODEL: &str = "gpt-4";

/// (date, time, title, recorded summary)
const CJ_CGV_ROWS: [(&str, &str, &str, &str); 7] = [
    (
        "2023-06-13",
        "16:30",
        "Additional Listing (Domestic CB Conversion)",
        "383 common shares from convertible bond conversions were added to the listing, effective June 16, 2023.",
    ),
    (
        "2023-06-20",
        "15:49",
        "Capital Increase Decision",
        "The board approved a rights offering of 74,700,000 common shares at 7,630 KRW per share, with most proceeds set aside for debt repayment.",
    ),
    (
        "2023-06-20",
        "16:04",
        "Loan Decision",
        "The company extended a 102.456 billion KRW loan at 7.37% to its Hong Kong subsidiary CGI Holdings Limited until December 20, 2023.",
    ),
    (
        "2023-06-20",
        "16:09",
        "Transactions with Affiliates",
        "Service contracts worth 12.349 billion KRW were agreed with the affiliate CJ OliveNetworks.",
    ),
    (
        "2023-06-20",
        "16:12",
        "Bond Warning",
        "Convertible bond 35CB was flagged as an investment caution bond after trading below 80% of face value.",
    ),
    (
        "2023-06-27",
        "17:04",
        "Additional Listing (Domestic CB Conversion)",
        "378 common shares from convertible bond conversions were added to the listing, effective June 30, 2023.",
    ),
    (
        "2023-06-30",
        "15:50",
        "Decision to Provide Collateral for Others",
        "KRW deposits of 29.343 billion KRW were pledged as collateral for borrowings of CGI Holdings Limited.",
    ),
];

/// Recorded rating reply for the June 2023 dossier.
pub const CJ_CGV_RATING_REPLY: &str = "Rating Score: 2 (Negative)\n\
Reasons for the score: Heavy share dilution and debt-funded support for an overseas subsidiary outweigh the new \
funding, and a bond caution flag signals market doubt about the balance sheet.";

/// The seven June 2023 disclosures as a feed.
pub fn cj_cgv_feed() -> String {
    let mut out = String::new();
    for (date, time, title, summary) in CJ_CGV_ROWS {
        let line = json!({
            "company_id": CJ_CGV_ID,
            "company_name": CJ_CGV_NAME,
            "date": date,
            "time": time,
            "title": title,
            "body": format!("[{title}] {summary} The full filing text is available from the exchange."),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// Replay cassette for the CJ CGV feed: one summary per disclosure under
/// [`CJ_SUMMARY_MODEL`] and the rating reply under [`CJ_RATING_MODEL`].
pub fn cj_cgv_cassette() -> Cassette {
    let parsed = parse_feed(cj_cgv_feed().as_bytes(), FeedFormat::JsonLines, &IngestConfig::default())
        .expect("fixture feed parses");
    let mut cassette = Cassette::new();
    let mut summaries = Vec::new();
    for (d, (_, _, _, summary)) in filter_timely(parsed.disclosures).iter().zip(CJ_CGV_ROWS) {
        cassette.insert(&summary_request(d), CJ_SUMMARY_MODEL, summary);
        summaries.push(CompanySummary {
            company_id: d.company_id.clone(),
            company_name: d.company_name.clone(),
            entry: DisclosureSummary {
                disclosed_at: d.disclosed_at,
                title: d.title.clone(),
                summary: summary.to_string(),
            },
        });
    }
    let set = build_dossiers(summaries, crate::dossier::DEFAULT_CAP, None).expect("fixture dossier builds");
    for dossier in &set.dossiers {
        cassette.insert(&build_rating_prompt(dossier, Rubric::v1()), CJ_RATING_MODEL, CJ_CGV_RATING_REPLY);
    }
    cassette
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn company_codes_are_unique() {
        let cs = companies(50);
        let ids: std::collections::BTreeSet<_> = cs.iter().map(|c| c.0.clone()).collect();
        let names: std::collections::BTreeSet<_> = cs.iter().map(|c| c.1.clone()).collect();
        assert_eq!((ids.len(), names.len()), (50, 50));
    }

    #[test]
    fn feed_is_seeded() {
        let spec = SynthSpec {
            companies: 3,
            ..SynthSpec::default()
        };
        assert_eq!(synthetic_feed(&spec), synthetic_feed(&spec));
        let other = SynthSpec { seed: 1, ..spec.clone() };
        assert_ne!(synthetic_feed(&spec), synthetic_feed(&other));
    }

    #[test]
    fn skew_composition() {
        let f = skewed_fixture();
        assert_eq!(f.humans.len(), 815);
        assert_eq!(f.humans.iter().filter(|h| h.consensus.get() == 3).count(), 615);
    }

    #[test]
    fn humans_ignore_order() {
        let m = Month::new(2023, 1).unwrap();
        let keys = vec![(CompanyId::new("a"), m), (CompanyId::new("b"), m)];
        let mut fwd = synthetic_humans(keys.clone(), 7);
        let mut rev = synthetic_humans(keys.into_iter().rev(), 7);
        fwd.sort_by(|a, b| a.company_id.cmp(&b.company_id));
        rev.sort_by(|a, b| a.company_id.cmp(&b.company_id));
        assert_eq!(fwd, rev);
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(with_commas(7), "7");
        assert_eq!(with_commas(1234), "1,234");
        assert_eq!(with_commas(74_700_000), "74,700,000");
    }
}
