/// Lowercases, drops everything but letters, digits, whitespace and hyphens,
/// then collapses whitespace runs into single spaces and trims the ends.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            pending_space = true;
        } else if ch.is_alphanumeric() || ch == '-' {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_text("  Team\tWork!! "), "team work");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("C++  &  Java"), "c java");
        assert_eq!(normalize_text("Front-End\n\nDeveloper"), "front-end developer");
        assert_eq!(normalize_text("!!!"), "");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,64}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
            prop_assert!(!once.contains("  "));
        }
    }
}
