//! Token extraction and signed feature hashing.

use crate::hash::fnv1a;

/// Lowercased alphanumeric runs.
pub fn text_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Host labels split on `.` followed by path tokens, all lowercased. The
/// scheme, port and user-info are discarded.
pub fn url_tokens(url: &str) -> Vec<String> {
    let lower = url.trim().to_lowercase();
    let rest = match lower.find("://") {
        Some(i) => &lower[i + 3..],
        None => lower.as_str(),
    };
    let host_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let (authority, path) = rest.split_at(host_end);
    let host = authority.rsplit('@').next().unwrap_or(authority);
    let host = host.split(':').next().unwrap_or(host);

    let mut tokens: Vec<String> = host.split('.').filter(|t| !t.is_empty()).map(str::to_string).collect();
    tokens.extend(text_tokens(path));
    tokens
}

/// Bucket and sign for `token` in a `dims`-wide hashed block: FNV-1a
/// reduced modulo `dims`, sign taken from bit 63.
pub fn hashed_slot(token: &str, dims: usize) -> (usize, f64) {
    let h = fnv1a(token.as_bytes());
    let slot = (h % dims as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (slot, sign)
}
