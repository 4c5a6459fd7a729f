use super::{OracleFailure, Verdict};
use crate::error::{Error, Result};

pub const SYSTEM_MESSAGE: &str =
    "You are an intelligent assistant that can identify the best passage based on its relevance to a query.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Best-of-n prompt; passages are numbered from 1 in the given order. User
/// text is inserted verbatim.
pub fn build_best_of_prompt(title: &str, description: &str, passages: &[&str]) -> Result<Prompt> {
    let n = passages.len();
    if !(2..=5).contains(&n) {
        return Err(Error::Arity(n));
    }
    let mut user = String::new();
    user.push_str("I will provide you with ");
    user.push_str(&n.to_string());
    user.push_str(" passages in no particular order, each indicated by a numerical identifier in square brackets.\n");
    user.push_str("      Identify the best passage based on its relevance to this search query: ");
    user.push_str(description);
    user.push_str(".\n\n");
    for (i, p) in passages.iter().enumerate() {
        user.push('[');
        user.push_str(&(i + 1).to_string());
        user.push_str("] ");
        user.push_str(p);
        user.push_str("\n\n");
    }
    user.push_str("General search topic: ");
    user.push_str(title);
    user.push_str(" Search Query: ");
    user.push_str(description);
    user.push_str(".\n\n");
    user.push_str("Identify the best passage above based on its relevance to the search query.\n");
    user.push_str("      The output format should be [], e.g., [4] meaning document 4 is most relevant to the search query.\n");
    user.push_str("      Only respond with the passage number; do not say any word or explain.");
    Ok(Prompt {
        system: SYSTEM_MESSAGE.to_owned(),
        user,
    })
}

/// Accepts exactly `[k]` (surrounding whitespace allowed) with
/// `1 <= k <= n_passages`, returning `k - 1`.
pub fn parse_best_of_response(text: &str, n_passages: usize) -> Verdict {
    let fail = || OracleFailure::Unparseable(text.chars().take(80).collect());
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(fail)?;
    if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
        return Err(fail());
    }
    let k: usize = inner.parse().map_err(|_| fail())?;
    if k == 0 || k > n_passages {
        return Err(fail());
    }
    Ok(k - 1)
}
