//! Text serialization of series for text-modality prompts.

use crate::synth::TimeSeries;

/// Serialize a series as comma-separated values rounded to `decimals` places
/// (three by default in the evaluation protocol), with no trailing separator.
///
/// Rounding is half-even on the decimal expansion: the value is first
/// expanded to `decimals + 9` correctly rounded digits, then cut at
/// `decimals` with ties going to the even digit. A result of negative zero is
/// normalized to positive zero.
pub fn serialize_text(series: &TimeSeries, decimals: usize) -> String {
    series
        .values()
        .iter()
        .map(|v| round_decimal_half_even(*v, decimals))
        .collect::<Vec<_>>()
        .join(",")
}

fn round_decimal_half_even(v: f64, decimals: usize) -> String {
    let guard = decimals + 9;
    let expanded = format!("{v:.guard$}");
    let negative = expanded.starts_with('-');
    let unsigned = expanded.trim_start_matches('-');
    let (int_part, frac_part) = unsigned.split_once('.').unwrap_or((unsigned, ""));

    // Digits of the magnitude: integer digits then fractional digits.
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let int_len = digits.len();
    digits.extend(frac_part.bytes().map(|b| b - b'0'));

    let keep = int_len + decimals;
    let dropped = &digits[keep.min(digits.len())..];
    let round_up = match dropped.first() {
        None => false,
        Some(&d) if d > 5 => true,
        Some(&d) if d < 5 => false,
        Some(_) => {
            if dropped[1..].iter().any(|&d| d != 0) {
                true
            } else {
                // Exact tie: round to even.
                keep > 0 && digits[keep - 1] % 2 == 1
            }
        }
    };
    digits.truncate(keep);
    if round_up {
        let mut i = keep;
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }

    let int_len = digits.len() - decimals;
    let int_str: String = digits[..int_len].iter().map(|d| (d + b'0') as char).collect();
    let frac_str: String = digits[int_len..].iter().map(|d| (d + b'0') as char).collect();
    let zero = digits.iter().all(|&d| d == 0);
    let sign = if negative && !zero { "-" } else { "" };
    if decimals == 0 {
        format!("{sign}{int_str}")
    } else {
        format!("{sign}{int_str}.{frac_str}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::TimeSeries;

    fn serialize(values: &[f64], decimals: usize) -> String {
        let s = TimeSeries::external(values.to_vec(), "fixture").unwrap();
        serialize_text(&s, decimals)
    }

    #[test]
    fn three_decimal_rule() {
        assert_eq!(serialize(&[1.23456, 2.0], 3), "1.235,2.000");
    }

    #[test]
    fn empty_series_is_empty_string() {
        assert_eq!(serialize(&[], 3), "");
    }

    #[test]
    fn negative_zero_is_normalized() {
        assert_eq!(serialize(&[-0.0005], 3), "0.000");
        assert_eq!(serialize(&[-0.0], 3), "0.000");
    }

    #[test]
    fn ties_round_to_even() {
        // 0.0005 -> ...000.5 exact tie at the cut, previous digit 0 is even.
        assert_eq!(serialize(&[0.0005], 3), "0.000");
        // 0.0015 -> previous digit 1 is odd, rounds up.
        assert_eq!(serialize(&[0.0015], 3), "0.002");
    }

    #[test]
    fn carries_propagate() {
        assert_eq!(serialize(&[9.9995], 3), "10.000");
        assert_eq!(serialize(&[-9.9999], 3), "-10.000");
    }

    #[test]
    fn no_trailing_separator() {
        let text = serialize(&[1.0, 2.0, 3.0], 3);
        assert!(!text.ends_with(','));
        assert_eq!(text.matches(',').count(), 2);
    }
}
