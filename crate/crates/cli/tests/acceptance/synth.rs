//! Seeded synthetic datasets for the four listing schemas.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub const CLICK_SEED: u64 = 0x5eed_0001;
pub const RATING_SEED: u64 = 0x5eed_0002;
pub const TOP_N_SEED: u64 = 0x5eed_0003;
pub const BASKET_SEED: u64 = 0x5eed_0004;

const CLICK_ROWS: usize = 5000;
const RATING_ROWS: usize = 5000;
const RATING_NOISE: f64 = 0.5;
const USERS: usize = 50;
const ITEMS: usize = 40;
const ITEMS_PER_USER: usize = 16;
const PREFERENCE_SHARPNESS: f64 = 1.5;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Clicks driven by three one-hot indicators: `ad_id=a0`,
/// `device_type=mobile` and `user_id=u0`.
pub fn clicks() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(CLICK_SEED);
    let devices = ["mobile", "desktop", "tablet"];
    let mut out = String::from("index_id,user_id,ad_id,device_type,timestamp,clicked\n");
    for i in 0..CLICK_ROWS {
        let user = if rng.gen_bool(0.2) { 0 } else { rng.gen_range(1..40) };
        let ad = rng.gen_range(0..5);
        let device = *devices.choose(&mut rng).unwrap();
        let z = -5.0
            + 6.0 * f64::from(u8::from(ad == 0))
            + 5.0 * f64::from(u8::from(device == "mobile"))
            + 4.0 * f64::from(u8::from(user == 0));
        let clicked = u8::from(rng.gen_bool(sigmoid(z)));
        out += &format!("{i},u{user},a{ad},{device},{},{clicked}\n", 1_000_000 + 60 * i);
    }
    out
}

/// Ratings linear in user age and movie genre plus N(0, 0.5²) noise.
pub fn ratings() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(RATING_SEED);
    let noise = Normal::new(0.0, RATING_NOISE).unwrap();
    let ages: Vec<u32> = (0..100).map(|_| rng.gen_range(18..71)).collect();
    let genre_effect = [0.8, 0.0, -0.5, 0.3];
    let mut out = String::from("index_id,user_id,movie_id,movie_genre,user_age,rating\n");
    for i in 0..RATING_ROWS {
        let user = rng.gen_range(0..ages.len());
        let movie = rng.gen_range(0..60);
        let genre = movie % genre_effect.len();
        let age = ages[user];
        let rating = 3.0 + 0.04 * (f64::from(age) - 44.0) + genre_effect[genre] + noise.sample(&mut rng);
        out += &format!("{i},u{user},m{movie},g{genre},{age},{rating}\n");
    }
    out
}

/// Two-factor user and item embeddings; `pref[u][i]` is their dot product.
fn preferences(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut draw = |n: usize| -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| [StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)])
            .collect()
    };
    let users = draw(USERS);
    let items = draw(ITEMS);
    users
        .iter()
        .map(|u| items.iter().map(|v| u[0] * v[0] + u[1] * v[1]).collect())
        .collect()
}

/// `count` distinct items drawn without replacement with weights
/// `exp(sharpness · pref)` (Gumbel top-k).
fn preferred_items(rng: &mut ChaCha8Rng, pref: &[f64], count: usize) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = pref
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (PREFERENCE_SHARPNESS * p - (-u.ln()).ln(), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(count).map(|(_, i)| i).collect()
}

/// Each user rates the items they prefer; ratings rise with preference.
pub fn top_n() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(TOP_N_SEED);
    let pref = preferences(&mut rng);
    let mut rows = Vec::new();
    for (u, p) in pref.iter().enumerate() {
        for i in preferred_items(&mut rng, p, ITEMS_PER_USER) {
            let noise: f64 = Normal::new(0.0, 0.5).unwrap().sample(&mut rng);
            let rating = (3.0 + p[i] + noise).round().clamp(1.0, 5.0);
            rows.push(format!("u{u:02},m{i:02},g{},{rating}\n", i % 5));
        }
    }
    rows.shuffle(&mut rng);
    let mut out = String::from("user_id,movie_id,genre,rating\n");
    out.extend(rows);
    out
}

/// Purchases of preferred products plus a few unbought browsing rows, in
/// random time order.
pub fn baskets() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(BASKET_SEED);
    let pref = preferences(&mut rng);
    let mut rows = Vec::new();
    for (u, p) in pref.iter().enumerate() {
        for i in preferred_items(&mut rng, p, ITEMS_PER_USER) {
            rows.push((u, i, 1));
        }
        for _ in 0..4 {
            rows.push((u, rng.gen_range(0..ITEMS), 0));
        }
    }
    rows.shuffle(&mut rng);
    let mut out = String::from("user_id,product_id,product_category,order_timestamp,bought\n");
    for (t, (u, i, bought)) in rows.into_iter().enumerate() {
        out += &format!("u{u:02},p{i:02},c{},{},{bought}\n", i % 6, 1_600_000_000 + 3600 * t);
    }
    out
}
