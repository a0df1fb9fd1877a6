use promptforge::{PromptClass, PromptPoint};

const HALF: i64 = 3;

/// Draws prompts over a grayscale image, which is first squeezed into
/// 32..=223 so the marks stay visible. Positives are white plus signs,
/// negatives black squares, hard negatives black crosses.
pub fn stamp(base: &[u8], width: usize, height: usize, points: &[PromptPoint]) -> Vec<u8> {
    let mut out: Vec<u8> = base
        .iter()
        .map(|&v| 32 + (v as u16 * 191 / 255) as u8)
        .collect();
    let mut put = |x: i64, y: i64, v: u8| {
        if (0..width as i64).contains(&x) && (0..height as i64).contains(&y) {
            out[y as usize * width + x as usize] = v;
        }
    };
    for p in points {
        let (cx, cy) = (p.x as i64, p.y as i64);
        for d in -HALF..=HALF {
            match p.class {
                PromptClass::Positive => {
                    put(cx + d, cy, 255);
                    put(cx, cy + d, 255);
                }
                PromptClass::Negative => {
                    for e in -HALF..=HALF {
                        put(cx + d, cy + e, 0);
                    }
                }
                PromptClass::HardNegative => {
                    put(cx + d, cy + d, 0);
                    put(cx + d, cy - d, 0);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marks_by_class() {
        let points = [
            PromptPoint::new(4, 4, PromptClass::Positive),
            PromptPoint::new(12, 4, PromptClass::Negative),
            PromptPoint::new(4, 12, PromptClass::HardNegative),
        ];
        let img = stamp(&[255; 20 * 20], 20, 20, &points);
        assert_eq!(img[4 * 20 + 7], 255);
        assert_eq!(img[5 * 20 + 5], 223);
        assert_eq!(img[5 * 20 + 13], 0);
        assert_eq!(img[13 * 20 + 5], 0);
        assert_eq!(img[12 * 20 + 5], 223);
        assert_eq!(img[0], 223);
    }
}
