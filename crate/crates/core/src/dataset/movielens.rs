//! Reader for the ml-1m `ratings.dat` file: `UserID::MovieID::Rating::Timestamp`.

use std::collections::HashMap;
use std::io::BufRead;

use super::Dataset;
use crate::error::{Error, Result};

/// Shared attribute name given to ratings.
pub const MOVIELENS_ATTR: &str = "rating";

pub fn load_movielens<R: BufRead>(source: R) -> Result<Dataset> {
    load_movielens_users(source, None)
}

/// Like [`load_movielens`], keeping only the first `max_users` distinct
/// users in file order.
pub fn load_movielens_users<R: BufRead>(source: R, max_users: Option<usize>) -> Result<Dataset> {
    let mut ds = Dataset::empty(MOVIELENS_ATTR);
    let mut users = HashMap::new();
    for (n, line) in source.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(Error::Ingestion {
                line: line_no,
                message: format!("expected 4 `::`-separated fields, found {}", fields.len()),
            });
        }
        let (user, movie) = (fields[0], fields[1]);
        let rating: u8 = fields[2].parse().map_err(|_| Error::Ingestion {
            line: line_no,
            message: format!("rating `{}` is not an integer", fields[2]),
        })?;
        if !(1..=5).contains(&rating) {
            return Err(Error::Ingestion {
                line: line_no,
                message: format!("rating {rating} outside 1..5"),
            });
        }
        if let Some(limit) = max_users {
            if !users.contains_key(user) && users.len() >= limit {
                continue;
            }
        }
        ds.push(&mut users, user, movie, &[(MOVIELENS_ATTR, f64::from(rating))])?;
    }
    if ds.histories.is_empty() {
        return Err(Error::Ingestion {
            line: 0,
            message: "no usable rating records".into(),
        });
    }
    ds.refresh_ranges();
    Ok(ds)
}
