//! Number extraction for the no-invented-numbers check.

/// Every standalone decimal number in `text` with the number of decimals it
/// was written with. Digits inside identifiers (`md2`, `run-0003`) are not
/// numbers.
pub fn numbers_in(text: &str) -> Vec<(f64, usize)> {
    let is_word = |c: char| c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | '+');
    text.split(|c: char| !is_word(c))
        .filter_map(|tok| {
            let tok = tok.trim_end_matches('.');
            let body = tok.strip_prefix(['+', '-']).unwrap_or(tok);
            let (int, frac) = match body.split_once('.') {
                Some((i, f)) => (i, Some(f)),
                None => (body, None),
            };
            let digits = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_digit());
            if !digits(int) || frac.is_some_and(|f| !digits(f)) {
                return None;
            }
            Some((tok.parse().ok()?, frac.map_or(0, str::len)))
        })
        .collect()
}

/// Numbers in `text` that do not match any of `facts` at the precision they
/// were written with.
pub fn invented_numbers(text: &str, facts: &[f64]) -> Vec<f64> {
    numbers_in(text)
        .into_iter()
        .filter(|&(v, decimals)| {
            let half = 0.5 * 10f64.powi(-(decimals as i32)) + 1e-9 * v.abs().max(1.0);
            !facts.iter().any(|f| (f - v).abs() <= half)
        })
        .map(|(v, _)| v)
        .collect()
}
