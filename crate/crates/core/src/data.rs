use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// `n` users, each holding exactly `m` items. One user is the unit of privacy.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDataset<Z> {
    users: Vec<Vec<Z>>,
    items_per_user: usize,
}

impl<Z> UserDataset<Z> {
    pub fn new(users: Vec<Vec<Z>>) -> Result<Self> {
        let m = users.first().map(Vec::len).ok_or_else(|| invalid("dataset has no users"))?;
        if m == 0 {
            return Err(invalid("users must hold at least one item"));
        }
        if let Some(bad) = users.iter().position(|u| u.len() != m) {
            return Err(invalid(format!(
                "dataset is not rectangular: user {bad} holds {} items, expected {m}",
                users[bad].len()
            )));
        }
        Ok(Self {
            users,
            items_per_user: m,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn items_per_user(&self) -> usize {
        self.items_per_user
    }

    pub fn user(&self, i: usize) -> &[Z] {
        &self.users[i]
    }

    pub fn users(&self) -> &[Vec<Z>] {
        &self.users
    }

    /// Replace one user's record, keeping the dataset rectangular.
    pub fn replace_user(&mut self, i: usize, items: Vec<Z>) -> Result<()> {
        if items.len() != self.items_per_user {
            return Err(invalid("replacement user has the wrong number of items"));
        }
        self.users[i] = items;
        Ok(())
    }

    pub fn view(&self, indices: Vec<usize>) -> UserView<'_, Z> {
        debug_assert!(indices.iter().all(|&i| i < self.users.len()));
        UserView { data: self, indices }
    }

    pub fn full_view(&self) -> UserView<'_, Z> {
        self.view((0..self.num_users()).collect())
    }
}

/// A borrowed subset of users.
#[derive(Debug, Clone)]
pub struct UserView<'a, Z> {
    data: &'a UserDataset<Z>,
    indices: Vec<usize>,
}

impl<'a, Z> UserView<'a, Z> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn items_per_user(&self) -> usize {
        self.data.items_per_user
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// The `k`-th user of the view.
    pub fn user(&self, k: usize) -> &'a [Z] {
        self.data.user(self.indices[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [Z]> + '_ {
        self.indices.iter().map(move |&i| self.data.user(i))
    }

    /// All items of all users, user-major.
    pub fn items(&self) -> impl Iterator<Item = &'a Z> + '_ {
        self.iter().flat_map(|u| u.iter())
    }

    /// Split into consecutive sub-views of the given sizes.
    pub fn chunks(&self, sizes: &[usize]) -> Result<Vec<UserView<'a, Z>>> {
        let total: usize = sizes.iter().sum();
        if total > self.len() {
            return Err(Error::InsufficientUsers {
                requested: total,
                available: self.len(),
            });
        }
        let mut offset = 0;
        Ok(sizes
            .iter()
            .map(|&s| {
                let v = UserView {
                    data: self.data,
                    indices: self.indices[offset..offset + s].to_vec(),
                };
                offset += s;
                v
            })
            .collect())
    }
}

/// Draw disjoint user subsets of the requested sizes from one seeded
/// permutation, consumed left to right.
pub fn split_users<'a, Z>(
    dataset: &'a UserDataset<Z>,
    sizes: &[usize],
    rng: &RngStream,
) -> Result<Vec<UserView<'a, Z>>> {
    let requested: usize = sizes.iter().sum();
    if requested > dataset.num_users() {
        return Err(Error::InsufficientUsers {
            requested,
            available: dataset.num_users(),
        });
    }
    let mut perm: Vec<usize> = (0..dataset.num_users()).collect();
    perm.shuffle(&mut rng.rng());
    dataset.view(perm).chunks(sizes)
}
