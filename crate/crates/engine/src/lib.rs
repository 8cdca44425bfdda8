//! An embedded columnar SQL engine for the query subset the session layer
//! emits: grouped aggregation over binned expressions, filters, joins,
//! scalar subqueries and `CREATE TABLE ... AS`.
//!
//! ```
//! use selcube_engine::Database;
//! let db = Database::new();
//! db.execute("CREATE TABLE t AS SELECT 1 AS a").unwrap();
//! let r = db.execute("SELECT a + 1 AS b FROM t").unwrap();
//! assert_eq!(r.value(0, 0), selcube_core::data::Value::Int(2));
//! ```

pub mod aggregate;
pub mod error;
pub mod exec;
pub mod expr;
mod hash;
pub mod table;
pub mod vector;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::RwLock;
use selcube_core::data::{Column, QueryResult};
use selcube_core::executor::{ExecError, Executor, Priority};
use selcube_core::sql::{parse_statements, ObjectName, Query, Statement};

pub use error::{EngineError, Result};
pub use exec::{Catalog, ExecMode, DEFAULT_SCHEMA};
pub use table::Table;

use exec::Context;

pub struct Database {
    catalog: RwLock<Arc<Catalog>>,
    dir: Option<PathBuf>,
    mode: RwLock<ExecMode>,
}

impl Default for Database {
    fn default() -> Self {
        Database::new()
    }
}

impl Database {
    /// An in-memory database.
    pub fn new() -> Database {
        Database {
            catalog: RwLock::new(Arc::new(Catalog::new())),
            dir: None,
            mode: RwLock::new(ExecMode::default()),
        }
    }

    pub fn with_mode(mode: ExecMode) -> Database {
        let db = Database::new();
        db.set_mode(mode);
        db
    }

    /// Opens (or creates) a database stored as table files in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Database> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut cat = Catalog::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            let Some(file) = p.file_name().and_then(|f| f.to_str()) else {
                continue;
            };
            if let Some(schema) = file.strip_suffix(".schema") {
                cat.schemas.insert(schema.to_ascii_lowercase());
            } else if let Some(stem) = file.strip_suffix(".tbl") {
                let Some((schema, name)) = stem.split_once('.') else {
                    continue;
                };
                let t = Table::load(&p)?;
                cat.schemas.insert(schema.to_ascii_lowercase());
                cat.tables
                    .insert((schema.to_ascii_lowercase(), name.to_ascii_lowercase()), Arc::new(t));
            }
        }
        Ok(Database {
            catalog: RwLock::new(Arc::new(cat)),
            dir: Some(dir),
            mode: RwLock::new(ExecMode::default()),
        })
    }

    pub fn mode(&self) -> ExecMode {
        *self.mode.read()
    }

    pub fn set_mode(&self, mode: ExecMode) {
        *self.mode.write() = mode;
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn snapshot(&self) -> Arc<Catalog> {
        self.catalog.read().clone()
    }

    /// Runs one or more `;`-separated statements; returns the last result.
    pub fn execute(&self, sql: &str) -> Result<QueryResult> {
        let start = Instant::now();
        let mut out = QueryResult::empty();
        for s in parse_statements(sql)? {
            out = self.execute_statement(&s)?;
        }
        out.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(out)
    }

    pub fn query(&self, q: &Query) -> Result<QueryResult> {
        Context::new(self.snapshot(), self.mode()).run_query(q)
    }

    pub fn execute_statement(&self, s: &Statement) -> Result<QueryResult> {
        match s {
            Statement::Query(q) => self.query(q),
            Statement::CreateSchema { name, if_not_exists } => {
                let key = name.to_ascii_lowercase();
                let mut cat = self.catalog.write();
                if cat.schemas.contains(&key) {
                    if *if_not_exists {
                        return Ok(QueryResult::empty());
                    }
                    return Err(EngineError::Catalog(format!("schema {name} already exists")));
                }
                if let Some(dir) = &self.dir {
                    std::fs::write(dir.join(format!("{key}.schema")), b"")?;
                }
                Arc::make_mut(&mut cat).schemas.insert(key);
                Ok(QueryResult::empty())
            }
            Statement::CreateTableAs {
                name,
                if_not_exists,
                query,
            } => {
                let key = Catalog::key(name);
                {
                    let cat = self.catalog.read();
                    if !cat.schemas.contains(&key.0) {
                        return Err(EngineError::Catalog(format!("schema {} does not exist", key.0)));
                    }
                    if cat.tables.contains_key(&key) {
                        if *if_not_exists {
                            return Ok(QueryResult::empty());
                        }
                        return Err(EngineError::Catalog(format!("table {name} already exists")));
                    }
                }
                let t = Table::from_result(self.query(query)?)?;
                self.install(key, t, *if_not_exists, name)?;
                Ok(QueryResult::empty())
            }
            Statement::DropTable { name, if_exists } => {
                let key = Catalog::key(name);
                let mut cat = self.catalog.write();
                if Arc::make_mut(&mut cat).tables.remove(&key).is_none() {
                    if *if_exists {
                        return Ok(QueryResult::empty());
                    }
                    return Err(EngineError::Catalog(format!("table {name} does not exist")));
                }
                self.remove_file(&key)?;
                Ok(QueryResult::empty())
            }
            Statement::DropSchema {
                name,
                if_exists,
                cascade,
            } => {
                let key = name.to_ascii_lowercase();
                let mut cat = self.catalog.write();
                if !cat.schemas.contains(&key) {
                    if *if_exists {
                        return Ok(QueryResult::empty());
                    }
                    return Err(EngineError::Catalog(format!("schema {name} does not exist")));
                }
                let owned: Vec<(String, String)> = cat.tables.keys().filter(|k| k.0 == key).cloned().collect();
                if !owned.is_empty() && !cascade {
                    return Err(EngineError::Catalog(format!("schema {name} is not empty")));
                }
                let cat = Arc::make_mut(&mut cat);
                for k in owned {
                    cat.tables.remove(&k);
                    self.remove_file(&k)?;
                }
                if key != DEFAULT_SCHEMA {
                    cat.schemas.remove(&key);
                    if let Some(dir) = &self.dir {
                        let _ = std::fs::remove_file(dir.join(format!("{key}.schema")));
                    }
                }
                Ok(QueryResult::empty())
            }
        }
    }

    fn install(&self, key: (String, String), t: Table, if_not_exists: bool, name: &ObjectName) -> Result<()> {
        let mut cat = self.catalog.write();
        if cat.tables.contains_key(&key) {
            if if_not_exists {
                return Ok(());
            }
            return Err(EngineError::Catalog(format!("table {name} already exists")));
        }
        if let Some(dir) = &self.dir {
            t.save(&dir.join(format!("{}.{}.tbl", key.0, key.1)))?;
        }
        Arc::make_mut(&mut cat).tables.insert(key, Arc::new(t));
        Ok(())
    }

    fn remove_file(&self, key: &(String, String)) -> Result<()> {
        if let Some(dir) = &self.dir {
            let p = dir.join(format!("{}.{}.tbl", key.0, key.1));
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
        Ok(())
    }

    /// Adds (or replaces) a table from columns. `name` may be `schema.table`.
    pub fn register_table(&self, name: &str, columns: Vec<Column>) -> Result<()> {
        let obj = ObjectName::new(name);
        let key = Catalog::key(&obj);
        let (names, data): (Vec<_>, Vec<_>) = columns.into_iter().map(|c| (c.name, c.data)).unzip();
        let t = Table::new(names, data)?;
        let mut cat = self.catalog.write();
        if let Some(dir) = &self.dir {
            if !cat.schemas.contains(&key.0) {
                std::fs::write(dir.join(format!("{}.schema", key.0)), b"")?;
            }
            t.save(&dir.join(format!("{}.{}.tbl", key.0, key.1)))?;
        }
        let cat = Arc::make_mut(&mut cat);
        cat.schemas.insert(key.0.clone());
        cat.tables.insert(key, Arc::new(t));
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<Arc<Table>> {
        self.catalog.read().get(&ObjectName::new(name))
    }

    /// `schema.table` names of every stored table.
    pub fn table_names(&self) -> Vec<String> {
        self.catalog
            .read()
            .tables
            .keys()
            .map(|(s, t)| format!("{s}.{t}"))
            .collect()
    }
}

impl Executor for Database {
    fn submit(&self, sql: &str, _priority: Priority) -> std::result::Result<QueryResult, ExecError> {
        self.execute(sql).map_err(|e| ExecError(e.to_string()))
    }
}
