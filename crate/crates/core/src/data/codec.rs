//! Label codec over the 38-symbol charset: indices 0–9 map to '0'–'9',
//! 10–35 to 'a'–'z', 36 is \[unk\] and 37 is \[eos\].

pub const UNK_INDEX: usize = 36;
pub const EOS_INDEX: usize = 37;
pub const CHARSET_SIZE: usize = 38;

/// Total, case-folding codec with a fixed maximum decode length.
#[derive(Debug, Clone)]
pub struct LabelCodec {
    max_len: usize,
}

impl LabelCodec {
    pub fn new(max_len: usize) -> Self {
        assert!(max_len >= 1, "codec max length must be positive");
        LabelCodec { max_len }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn charset_size(&self) -> usize {
        CHARSET_SIZE
    }

    /// Any character maps to something: alphanumerics to their class,
    /// everything else to \[unk\].
    pub fn char_to_index(c: char) -> usize {
        let c = c.to_ascii_lowercase();
        match c {
            '0'..='9' => c as usize - '0' as usize,
            'a'..='z' => 10 + c as usize - 'a' as usize,
            _ => UNK_INDEX,
        }
    }

    /// Inverse mapping for decoding; \[unk\] renders as '?'.
    pub fn index_to_char(i: usize) -> Option<char> {
        match i {
            0..=9 => Some((b'0' + i as u8) as char),
            10..=35 => Some((b'a' + (i - 10) as u8) as char),
            UNK_INDEX => Some('?'),
            _ => None,
        }
    }

    /// Encode to exactly `max_len` indices: lowercase-fold, map each
    /// character, truncate to `max_len − 1`, then fill the remainder with
    /// \[eos\] so every position carries a defined target.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out: Vec<usize> =
            text.chars().take(self.max_len - 1).map(Self::char_to_index).collect();
        out.resize(self.max_len, EOS_INDEX);
        out
    }

    /// Decode by truncating at the first \[eos\].
    pub fn decode(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .take_while(|&&i| i != EOS_INDEX)
            .filter_map(|&i| Self::index_to_char(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_mixed_case_alphanumerics() {
        let codec = LabelCodec::new(25);
        let enc = codec.encode("Ab1");
        assert_eq!(enc.len(), 25);
        assert_eq!(&enc[..4], &[10, 11, 1, EOS_INDEX]);
        assert!(enc[4..].iter().all(|&i| i == EOS_INDEX));
    }

    #[test]
    fn empty_string_is_all_eos() {
        let codec = LabelCodec::new(6);
        assert_eq!(codec.encode(""), vec![EOS_INDEX; 6]);
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let codec = LabelCodec::new(8);
        let enc = codec.encode("a#b");
        assert_eq!(&enc[..4], &[10, UNK_INDEX, 11, EOS_INDEX]);
    }

    #[test]
    fn long_text_truncates_to_max_len_minus_one() {
        let codec = LabelCodec::new(4);
        let enc = codec.encode("abcdef");
        assert_eq!(enc, vec![10, 11, 12, EOS_INDEX]);
    }

    #[test]
    fn decode_truncates_at_first_eos_and_renders_unk() {
        let codec = LabelCodec::new(8);
        let decoded = codec.decode(&[10, UNK_INDEX, 1, EOS_INDEX, 12, 13, EOS_INDEX, EOS_INDEX]);
        assert_eq!(decoded, "a?1");
        assert_eq!(codec.decode(&[EOS_INDEX; 8]), "");
    }

    #[test]
    fn roundtrip_on_short_alphanumeric_strings_lowercases() {
        let codec = LabelCodec::new(25);
        for s in ["hello", "WORLD42", "a1B2c3", "z", "0123456789"] {
            assert_eq!(codec.decode(&codec.encode(s)), s.to_ascii_lowercase());
        }
    }
}
