//! Prompt templates: text assets with `{{name}}` placeholders.

pub const INTENT_TEMPLATE: &str = include_str!("../assets/templates/intent.txt");
pub const SLOT_TEMPLATE: &str = include_str!("../assets/templates/slot.txt");
pub const RESPONSE_TEMPLATE: &str = include_str!("../assets/templates/response.txt");

/// Substitutes every `{{key}}` in `template`. Placeholders are filled in a
/// single left-to-right pass so substituted text is never re-expanded.
/// Unknown placeholders are left verbatim.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(key);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
