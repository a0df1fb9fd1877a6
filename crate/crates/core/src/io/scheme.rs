use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::spatial::{PromptClass, PromptPoint, PromptScheme};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeJson {
    image_size: [u32; 2],
    positive: Vec<[u32; 2]>,
    negative: Vec<[u32; 2]>,
    #[serde(default)]
    hard_negative: Vec<[u32; 2]>,
}

fn coords(scheme: &PromptScheme, class: PromptClass) -> Vec<[u32; 2]> {
    scheme.of_class(class).map(|p| [p.x, p.y]).collect()
}

pub fn scheme_to_json(scheme: &PromptScheme) -> String {
    let json = SchemeJson {
        image_size: [scheme.width(), scheme.height()],
        positive: coords(scheme, PromptClass::Positive),
        negative: coords(scheme, PromptClass::Negative),
        hard_negative: coords(scheme, PromptClass::HardNegative),
    };
    serde_json::to_string(&json).expect("scheme serialization cannot fail")
}

pub fn scheme_from_json(text: &str) -> Result<PromptScheme> {
    let json: SchemeJson = serde_json::from_str(text)?;
    let [w, h] = json.image_size;
    let tagged = |list: Vec<[u32; 2]>, class| {
        list.into_iter()
            .map(move |[x, y]| PromptPoint::new(x, y, class))
    };
    PromptScheme::new(
        w,
        h,
        tagged(json.positive, PromptClass::Positive)
            .chain(tagged(json.negative, PromptClass::Negative))
            .chain(tagged(json.hard_negative, PromptClass::HardNegative)),
    )
}

pub fn save_prompt_scheme(scheme: &PromptScheme, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), scheme_to_json(scheme).as_bytes())
}

pub fn load_prompt_scheme(path: impl AsRef<Path>) -> Result<PromptScheme> {
    let bytes = super::read_bytes(path.as_ref())?;
    scheme_from_json(&String::from_utf8_lossy(&bytes))
}
