use chrono::TimeZone;
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use sentimon_core::dossier::{build_dossiers, CompanySummary, DisclosureSummary, DEFAULT_CAP};
use sentimon_core::ingest::{kst, CompanyId};
use sentimon_core::metrics::{cohens_kappa, kendall_tau_b, spearman_rho};
use sentimon_core::rating::{parse_rating, render_rating, RatingRecord, Score};
use sentimon_core::synthetic;

fn metrics(c: &mut Criterion) {
    let skew = synthetic::skewed_fixture();
    let human: Vec<Score> = skew.humans.iter().map(|h| h.consensus).collect();
    let model: Vec<Score> = skew
        .ratings
        .iter()
        .filter_map(|r| match r {
            RatingRecord::Rated(r) => Some(r.score),
            RatingRecord::Failed(_) => None,
        })
        .collect();
    c.bench_function("spearman_815", |b| b.iter(|| spearman_rho(black_box(&human), black_box(&model))));
    c.bench_function("kendall_815", |b| b.iter(|| kendall_tau_b(black_box(&human), black_box(&model))));
    c.bench_function("kappa_815", |b| b.iter(|| cohens_kappa(black_box(&human), black_box(&model))));
}

fn parsing(c: &mut Criterion) {
    let reply = render_rating(Score::new(2).unwrap(), "Dilution and refinancing point to funding strain.");
    c.bench_function("parse_rating", |b| b.iter(|| parse_rating(black_box(&reply))));
}

fn dossiers(c: &mut Criterion) {
    let items: Vec<CompanySummary> = (0..50)
        .flat_map(|co| {
            (0..17 * 12).map(move |i| CompanySummary {
                company_id: CompanyId::new(format!("{:06}", 100_000 + co)),
                company_name: format!("Company {co}"),
                entry: DisclosureSummary {
                    disclosed_at: kst().with_ymd_and_hms(2022, 1, 1, 9, 0, 0).unwrap() + chrono::Duration::hours(i * 60),
                    title: format!("Notice {i}"),
                    summary: format!("Summary {i}."),
                },
            })
        })
        .collect();
    c.bench_function("build_dossiers_10k", |b| b.iter(|| build_dossiers(black_box(items.clone()), DEFAULT_CAP, None)));
}

criterion_group!(benches, metrics, parsing, dossiers);
criterion_main!(benches);
