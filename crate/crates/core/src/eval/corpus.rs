use chrono::{NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{CoreError, Result};
use crate::stream::{Post, PostStream};

/// One topic: a word pool and a hashtag pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicSpec {
    pub name: String,
    pub words: Vec<String>,
    pub hashtags: Vec<String>,
}

/// A drift event: starting at `day` (1-based), topics draw hashtags from
/// replacement pools and/or the topic mixture changes.
///
/// `ramp` models how a real trend surges before taking over: on the
/// `ramp.len()` days before `day`, each post uses the incoming pool with
/// the listed probability. Fractions are kept low enough that the daily
/// top-n stays dominated by the old pools until the swap day itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftEvent {
    pub day: u32,
    /// One replacement hashtag pool per topic; empty means unchanged.
    #[serde(default)]
    pub new_hashtag_pools: Vec<Vec<String>>,
    #[serde(default)]
    pub new_mixture: Option<Vec<f64>>,
    /// Per-day probabilities of drawing from the incoming pools on the
    /// days just before `day`; entry `i` applies `ramp.len() - i` days
    /// before the swap.
    #[serde(default)]
    pub ramp: Vec<f64>,
    /// After the swap, probability that a post still draws its tags from
    /// the replaced pool. The surge tags own the daily top-n, but the old
    /// usage lingers in the long tail, as real conversations do.
    #[serde(default)]
    pub retain_weight: f64,
}

/// Generator configuration for a synthetic post corpus with scheduled
/// trend drifts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub start_date: NaiveDate,
    pub days: u32,
    pub posts_per_day: u32,
    pub seed: u64,
    pub topics: Vec<TopicSpec>,
    /// Base per-topic mixture; must sum to 1.
    pub mixture: Vec<f64>,
    #[serde(default)]
    pub drift_events: Vec<DriftEvent>,
    #[serde(default = "default_words_per_post")]
    pub words_per_post: (u32, u32),
    #[serde(default = "default_tags_per_post")]
    pub tags_per_post: (u32, u32),
}

fn default_words_per_post() -> (u32, u32) {
    (8, 20)
}

fn default_tags_per_post() -> (u32, u32) {
    (1, 3)
}

const MIXTURE_TOLERANCE: f64 = 1e-9;

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 || self.posts_per_day == 0 {
            return Err(CoreError::Config("days and posts_per_day must be >= 1".into()));
        }
        if self.topics.is_empty() {
            return Err(CoreError::Config("at least one topic is required".into()));
        }
        for topic in &self.topics {
            if topic.words.is_empty() || topic.hashtags.is_empty() {
                return Err(CoreError::Config(format!(
                    "topic `{}` needs non-empty word and hashtag pools",
                    topic.name
                )));
            }
        }
        check_mixture(&self.mixture, self.topics.len())?;
        for event in &self.drift_events {
            if event.day <= 1 || event.day >= self.days {
                return Err(CoreError::Config(format!(
                    "drift day {} must lie strictly inside 1..{}",
                    event.day, self.days
                )));
            }
            if !event.new_hashtag_pools.is_empty()
                && event.new_hashtag_pools.len() != self.topics.len()
            {
                return Err(CoreError::Config(format!(
                    "drift at day {} lists {} pools for {} topics",
                    event.day,
                    event.new_hashtag_pools.len(),
                    self.topics.len()
                )));
            }
            if let Some(mixture) = &event.new_mixture {
                check_mixture(mixture, self.topics.len())?;
            }
            if event.ramp.len() as u32 >= event.day {
                return Err(CoreError::Config(format!(
                    "drift at day {} ramps over {} days, before the stream starts",
                    event.day,
                    event.ramp.len()
                )));
            }
            if event.ramp.iter().any(|&f| !(0.0..1.0).contains(&f)) {
                return Err(CoreError::Config(
                    "ramp fractions must lie in [0, 1)".into(),
                ));
            }
            if !(0.0..1.0).contains(&event.retain_weight) {
                return Err(CoreError::Config(
                    "retain_weight must lie in [0, 1)".into(),
                ));
            }
        }
        let (w_lo, w_hi) = self.words_per_post;
        let (t_lo, t_hi) = self.tags_per_post;
        if w_lo == 0 || w_lo > w_hi || t_lo == 0 || t_lo > t_hi {
            return Err(CoreError::Config(
                "words_per_post and tags_per_post must be non-empty ranges".into(),
            ));
        }
        Ok(())
    }
}

fn check_mixture(mixture: &[f64], n_topics: usize) -> Result<()> {
    if mixture.len() != n_topics {
        return Err(CoreError::Config(format!(
            "invalid mixture: {} weights for {} topics",
            mixture.len(),
            n_topics
        )));
    }
    if mixture.iter().any(|&m| m < 0.0) {
        return Err(CoreError::Config("invalid mixture: negative weight".into()));
    }
    let sum: f64 = mixture.iter().sum();
    if (sum - 1.0).abs() > MIXTURE_TOLERANCE {
        return Err(CoreError::Config(format!(
            "invalid mixture: weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Generates the corpus deterministically under the spec's seed.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<PostStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut posts = Vec::with_capacity((spec.days * spec.posts_per_day) as usize);

    struct TopicPools {
        current: Vec<String>,
        legacy: Option<(Vec<String>, f64)>,
    }
    let mut pools: Vec<TopicPools> = spec
        .topics
        .iter()
        .map(|t| TopicPools {
            current: t.hashtags.clone(),
            legacy: None,
        })
        .collect();
    let mut mixture = spec.mixture.clone();
    let mut post_id = 0u64;

    for day in 1..=spec.days {
        for event in &spec.drift_events {
            if event.day == day {
                if !event.new_hashtag_pools.is_empty() {
                    for (pool, new) in pools.iter_mut().zip(&event.new_hashtag_pools) {
                        if !new.is_empty() {
                            let old = std::mem::replace(&mut pool.current, new.clone());
                            pool.legacy = (event.retain_weight > 0.0)
                                .then_some((old, event.retain_weight));
                        }
                    }
                }
                if let Some(new_mixture) = &event.new_mixture {
                    mixture = new_mixture.clone();
                }
            }
        }
        // An upcoming event whose ramp covers this day: posts draw from
        // the incoming pools with the scheduled probability.
        let ramp = spec.drift_events.iter().find_map(|event| {
            let len = event.ramp.len() as u32;
            if len > 0 && day < event.day && day + len >= event.day {
                let idx = (day + len - event.day) as usize;
                Some((event.ramp[idx], &event.new_hashtag_pools))
            } else {
                None
            }
        });
        let cumulative: Vec<f64> = mixture
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect();

        let date = spec.start_date + chrono::Days::new(u64::from(day) - 1);
        for i in 0..spec.posts_per_day {
            let u: f64 = rng.gen();
            let topic_idx = cumulative.partition_point(|&c| c < u).min(spec.topics.len() - 1);
            let topic = &spec.topics[topic_idx];
            let state = &pools[topic_idx];
            let pool = match ramp {
                Some((fraction, incoming)) if rng.gen_bool(fraction) => incoming
                    .get(topic_idx)
                    .filter(|p| !p.is_empty())
                    .unwrap_or(&state.current),
                _ => match &state.legacy {
                    Some((old, weight)) if rng.gen_bool(*weight) => old,
                    _ => &state.current,
                },
            };

            let n_words = rng.gen_range(spec.words_per_post.0..=spec.words_per_post.1);
            let mut text = String::new();
            for _ in 0..n_words {
                text.push_str(&topic.words[rng.gen_range(0..topic.words.len())]);
                text.push(' ');
            }
            let n_tags = rng
                .gen_range(spec.tags_per_post.0..=spec.tags_per_post.1)
                .min(pool.len() as u32);
            let tags: Vec<String> = pool
                .choose_multiple(&mut rng, n_tags as usize)
                .cloned()
                .collect();
            for tag in &tags {
                text.push('#');
                text.push_str(tag);
                text.push(' ');
            }

            let seconds = i64::from(i) * 86_400 / i64::from(spec.posts_per_day);
            let timestamp = Utc
                .from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
                + chrono::Duration::seconds(seconds);
            posts.push(Post {
                id: format!("p{post_id:06}"),
                timestamp,
                text: text.trim_end().to_string(),
                hashtags: tags,
            });
            post_id += 1;
        }
    }
    Ok(PostStream::from_posts(posts))
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    ts: String,
    text: &'a str,
    tags: &'a [String],
}

/// Writes a stream as line-delimited records, the parseable input format.
pub fn write_corpus(mut w: impl Write, stream: &PostStream) -> Result<()> {
    for post in stream.posts() {
        let record = RecordOut {
            id: &post.id,
            ts: post.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            text: &post.text,
            tags: &post.hashtags,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| CoreError::parse("record", e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Stationary corpus: one topic whose hashtag pool exactly fills the
/// trending capacity, so the daily top-n set never changes.
pub fn stationary_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        start_date: NaiveDate::from_ymd_opt(2020, 8, 1).expect("valid date"),
        days: 30,
        posts_per_day: 100,
        seed,
        topics: vec![TopicSpec {
            name: "health".into(),
            words: words_health(),
            hashtags: vec![
                "covid19".into(),
                "coronavirus".into(),
                "pandemic".into(),
                "wearamask".into(),
                "stayhome".into(),
                "staysafe".into(),
                "sarscov2".into(),
                "washyourhands".into(),
                "flattenthecurve".into(),
                "reallifeheroes".into(),
            ],
        }],
        mixture: vec![1.0],
        drift_events: vec![],
        words_per_post: (8, 20),
        tags_per_post: (1, 3),
    }
}

/// Three topics with a total hashtag-pool swap at day 20 of 30. No ramp:
/// the turnover is instantaneous, so the swap-day distance is exactly 1.
pub fn single_drift_spec(seed: u64) -> CorpusSpec {
    let mut spec = drift_base(seed, 30);
    spec.drift_events = vec![DriftEvent {
        day: 20,
        new_hashtag_pools: era_pools(1),
        new_mixture: None,
        ramp: vec![],
        retain_weight: 0.0,
    }];
    spec
}

/// Three topics over 60 days with trending-set turnovers at days 20 and
/// 40.
///
/// Each turnover behaves like a real surge: the incoming tags ramp up
/// over the three prior days without cracking the top-n, take the whole
/// top-n on the swap day, and the replaced tags linger afterwards in a
/// minority of posts. Detection therefore fires exactly once per drift
/// with a full-turnover distance, while the post-drift conversation
/// keeps a learnable overlap with recent history.
pub fn two_drift_spec(seed: u64) -> CorpusSpec {
    let ramp = vec![0.15, 0.3, 0.45];
    let mut spec = drift_base(seed, 60);
    spec.drift_events = vec![
        DriftEvent {
            day: 20,
            new_hashtag_pools: era_pools(1),
            new_mixture: None,
            ramp: ramp.clone(),
            retain_weight: 0.0,
        },
        DriftEvent {
            day: 40,
            new_hashtag_pools: era_pools(2),
            new_mixture: None,
            ramp,
            retain_weight: 0.0,
        },
    ];
    spec
}

fn drift_base(seed: u64, days: u32) -> CorpusSpec {
    let eras = era_pools(0);
    CorpusSpec {
        start_date: NaiveDate::from_ymd_opt(2020, 8, 1).expect("valid date"),
        days,
        posts_per_day: 100,
        seed,
        topics: vec![
            TopicSpec {
                name: "health".into(),
                words: words_health(),
                hashtags: eras[0].clone(),
            },
            TopicSpec {
                name: "politics".into(),
                words: words_politics(),
                hashtags: eras[1].clone(),
            },
            TopicSpec {
                name: "culture".into(),
                words: words_culture(),
                hashtags: eras[2].clone(),
            },
        ],
        mixture: vec![0.4, 0.35, 0.25],
        drift_events: vec![],
        words_per_post: (8, 20),
        tags_per_post: (1, 3),
    }
}

fn words_health() -> Vec<String> {
    [
        "mask", "virus", "vaccine", "doctor", "hospital", "symptom", "health", "quarantine",
        "nurse", "testing", "distancing", "outbreak", "infection", "ventilator", "icu",
        "immunity", "sanitizer", "fever", "cough", "isolation", "epidemic", "clinic",
        "patient", "antibody", "swab", "ward", "contagion", "respirator", "wellness", "hygiene",
    ]
    .map(String::from)
    .to_vec()
}

fn words_politics() -> Vec<String> {
    [
        "vote", "ballot", "debate", "senate", "campaign", "policy", "election", "congress",
        "candidate", "poll", "speech", "rally", "swing", "turnout", "primary", "caucus",
        "legislation", "governor", "district", "registration", "incumbent", "platform",
        "endorsement", "precinct", "electorate", "mandate", "filibuster", "veto", "lobby",
        "referendum",
    ]
    .map(String::from)
    .to_vec()
}

fn words_culture() -> Vec<String> {
    [
        "music", "concert", "album", "artist", "festival", "stream", "video", "fans",
        "premiere", "chart", "tour", "stage", "single", "remix", "lyrics", "vinyl",
        "playlist", "encore", "backstage", "billboard", "producer", "studio", "acoustic",
        "ticket", "arena", "soundcheck", "merch", "fandom", "tracklist", "collab",
    ]
    .map(String::from)
    .to_vec()
}

/// Per-topic hashtag pools for era 0 (bootstrap), 1 (first drift), and
/// 2 (second drift). Pools are disjoint across eras, so a swap turns the
/// daily top-n over completely.
fn era_pools(era: usize) -> Vec<Vec<String>> {
    let pools: [[&str; 18]; 3] = [
        [
            // era 0: health, politics, culture
            "covid19", "wearamask", "stayhome", "washyourhands", "sarscov2", "pandemic",
            "maga", "trump2020", "bidenharris2020", "debates2020", "vote2020", "uselections",
            "nowplaying", "newalbum", "musicmonday", "tourlife", "chartnews", "fanarmy",
        ],
        [
            "trumpknew", "trumpvirus", "heknew", "covidsecondwave", "maskmandate", "longcovid",
            "votehimout", "cashforballots", "trumptaxreturns", "debatetuesday", "earlyvoting",
            "pollwatch", "btsonunga", "btsxunga", "virtualconcert", "albumdrop", "livestreamgig",
            "encorenight",
        ],
        [
            "vaccinerollout", "boostershot", "herdimmunity", "newvariant", "openschools",
            "fluseason", "electionnight", "countthevotes", "transition2020", "recount",
            "senaterunoff", "certifyresults", "grammynoms", "holidayalbum", "yearendchart",
            "stadiumtour", "fanmeet", "unplugged",
        ],
    ];
    let era = &pools[era];
    vec![
        era[0..6].iter().map(|s| s.to_string()).collect(),
        era[6..12].iter().map(|s| s.to_string()).collect(),
        era[12..18].iter().map(|s| s.to_string()).collect(),
    ]
}
