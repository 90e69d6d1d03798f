use chrono::DateTime;
use percent_encoding::percent_decode_str;

use super::{
    CompareOp, ExpandNode, Expr, Literal, Operand, OrderKey, PropertyPath, QueryError, QueryOptions, QueryPlan,
    Segment, SortDirection,
};
use crate::model::{EntityId, EntityType};

/// Parses a service-relative URL such as
/// `Sensors?$filter=sensorType eq 'x'&$top=5`. The text is percent-decoded
/// first; error offsets refer to the decoded text.
pub fn parse_query(text: &str) -> Result<QueryPlan, QueryError> {
    let decoded = percent_decode_str(text)
        .decode_utf8()
        .map_err(|_| QueryError::syntax(0, "query text is not valid UTF-8"))?;
    let mut p = Parser { s: decoded.chars().collect(), pos: 0 };
    p.parse_plan()
}

struct Parser {
    s: Vec<char>,
    pos: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Level {
    Top,
    Nested,
}

impl Level {
    fn separator(self) -> char {
        match self {
            Level::Top => '&',
            Level::Nested => ';',
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '@'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '@' || c == '.'
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.s.get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), QueryError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn error(&self, message: impl Into<String>) -> QueryError {
        QueryError::syntax(self.pos, message)
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        if !self.peek().is_some_and(is_ident_start) {
            return Err(self.error("expected a name"));
        }
        let start = self.pos;
        while self.peek().is_some_and(is_ident_char) {
            self.pos += 1;
        }
        Ok(self.s[start..self.pos].iter().collect())
    }

    fn digits(&mut self) -> Result<u64, QueryError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let text: String = self.s[start..self.pos].iter().collect();
        text.parse().map_err(|_| QueryError::syntax(start, "expected a non-negative integer"))
    }

    /// Consumes `word` (case-insensitive) when it stands alone.
    fn keyword(&mut self, word: &str) -> bool {
        let save = self.pos;
        self.skip_ws();
        let end = self.pos + word.len();
        if end <= self.s.len() {
            let cand: String = self.s[self.pos..end].iter().collect();
            let boundary = self.s.get(end).is_none_or(|c| !is_ident_char(*c));
            if cand.eq_ignore_ascii_case(word) && boundary {
                self.pos = end;
                return true;
            }
        }
        self.pos = save;
        false
    }

    fn parse_plan(&mut self) -> Result<QueryPlan, QueryError> {
        while self.eat('/') {}
        let mut path = Vec::new();
        loop {
            let name = self.ident()?;
            if path.is_empty() && EntityType::from_set_name(&name).is_none() {
                return Err(QueryError::UnknownEntitySet(name));
            }
            let id = if self.eat('(') {
                let id = self.digits()?;
                if id == 0 {
                    return Err(self.error("ids are positive integers"));
                }
                self.expect(')')?;
                Some(EntityId(id))
            } else {
                None
            };
            path.push(Segment { name, id });
            if self.eat('/') {
                if self.at_end() || self.peek() == Some('?') {
                    break;
                }
                continue;
            }
            break;
        }
        let options = if self.eat('?') {
            self.parse_options(Level::Top)?
        } else if self.at_end() {
            QueryOptions::default()
        } else {
            return Err(self.error("expected `/`, `?` or end of path"));
        };
        if !self.at_end() {
            return Err(self.error("unexpected trailing text"));
        }
        Ok(QueryPlan { path, options })
    }

    fn parse_options(&mut self, level: Level) -> Result<QueryOptions, QueryError> {
        let mut opts = QueryOptions::default();
        let mut seen: Vec<String> = Vec::new();
        loop {
            self.skip_ws();
            if self.at_end() || (level == Level::Nested && self.peek() == Some(')')) {
                break;
            }
            let dollar = self.eat('$');
            let name_at = self.pos;
            let name = self.ident().map_err(|_| QueryError::syntax(name_at, "expected an option name"))?;
            let key = name.to_ascii_lowercase();
            let known = ["filter", "expand", "select", "orderby", "top", "skip"];
            if !dollar || !known.contains(&key.as_str()) {
                return Err(QueryError::UnknownOption(if dollar { format!("${name}") } else { name }));
            }
            if seen.contains(&key) {
                return Err(QueryError::syntax(name_at, format!("option ${name} given twice")));
            }
            seen.push(key.clone());
            self.skip_ws();
            self.expect('=')?;
            self.skip_ws();
            match key.as_str() {
                "filter" => opts.filter = Some(self.parse_or()?),
                "expand" => opts.expand = self.parse_expand_list()?,
                "select" => opts.select = self.parse_select()?,
                "orderby" => opts.order_by = self.parse_order_by()?,
                "top" => opts.top = Some(self.digits()?),
                "skip" => opts.skip = Some(self.digits()?),
                _ => unreachable!("checked against known options"),
            }
            self.skip_ws();
            if self.eat(level.separator()) {
                continue;
            }
            if self.at_end() || (level == Level::Nested && self.peek() == Some(')')) {
                break;
            }
            return Err(self.error(format!("expected `{}` between options", level.separator())));
        }
        Ok(opts)
    }

    fn parse_select(&mut self) -> Result<Vec<String>, QueryError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            out.push(self.ident()?);
            self.skip_ws();
            if !self.eat(',') {
                return Ok(out);
            }
        }
    }

    fn parse_path(&mut self) -> Result<PropertyPath, QueryError> {
        let mut segs = vec![self.ident()?];
        while self.peek() == Some('/') {
            self.pos += 1;
            segs.push(self.ident()?);
        }
        Ok(PropertyPath(segs))
    }

    fn parse_order_by(&mut self) -> Result<Vec<OrderKey>, QueryError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let path = self.parse_path()?;
            let direction = if self.keyword("desc") {
                SortDirection::Desc
            } else {
                self.keyword("asc");
                SortDirection::Asc
            };
            out.push(OrderKey { path, direction });
            self.skip_ws();
            if !self.eat(',') {
                return Ok(out);
            }
        }
    }

    fn parse_expand_list(&mut self) -> Result<Vec<ExpandNode>, QueryError> {
        let mut nodes: Vec<ExpandNode> = Vec::new();
        loop {
            self.skip_ws();
            let path = self.parse_path()?;
            self.skip_ws();
            let opts = if self.eat('(') {
                let o = self.parse_options(Level::Nested)?;
                self.skip_ws();
                self.expect(')')?;
                o
            } else {
                QueryOptions::default()
            };
            insert_expand(&mut nodes, &path.0, opts);
            self.skip_ws();
            if !self.eat(',') {
                return Ok(nodes);
            }
        }
    }

    fn parse_or(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.parse_and()?;
        while self.keyword("or") {
            let right = self.parse_and()?;
            left = Expr::or(left, right);
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.parse_primary()?;
        while self.keyword("and") {
            let right = self.parse_primary()?;
            left = Expr::and(left, right);
        }
        Ok(left)
    }

    fn parse_primary(&mut self) -> Result<Expr, QueryError> {
        self.skip_ws();
        if self.eat('(') {
            let e = self.parse_or()?;
            self.skip_ws();
            self.expect(')')?;
            return Ok(e);
        }
        let left = self.parse_operand()?;
        self.skip_ws();
        let op_at = self.pos;
        let word = self.ident().map_err(|_| QueryError::syntax(op_at, "expected a comparison operator"))?;
        let op = CompareOp::ALL
            .into_iter()
            .find(|o| o.keyword().eq_ignore_ascii_case(&word))
            .ok_or_else(|| QueryError::syntax(op_at, format!("unknown operator `{word}`")))?;
        let right = self.parse_operand()?;
        Ok(Expr::Compare { left, op, right })
    }

    fn parse_operand(&mut self) -> Result<Operand, QueryError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("expected an expression")),
            Some('\'') => {
                self.pos += 1;
                let mut text = String::new();
                loop {
                    match self.peek() {
                        None => return Err(QueryError::syntax(start, "unterminated string literal")),
                        Some('\'') => {
                            self.pos += 1;
                            if self.eat('\'') {
                                text.push('\'');
                            } else {
                                break;
                            }
                        }
                        Some(c) => {
                            text.push(c);
                            self.pos += 1;
                        }
                    }
                }
                Ok(Operand::Literal(Literal::Text(text)))
            }
            Some(c) if c.is_ascii_digit() || c == '-' => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | ':' | '+' | '-')) {
                    self.pos += 1;
                }
                let token: String = self.s[start..self.pos].iter().collect();
                let numeric = token.trim_start_matches('-').starts_with(|c: char| c.is_ascii_digit());
                if let Some(n) = token.parse::<f64>().ok().filter(|n| numeric && n.is_finite()) {
                    return Ok(Operand::Literal(Literal::Number(n)));
                }
                DateTime::parse_from_rfc3339(&token)
                    .map(|t| Operand::Literal(Literal::DateTime(t)))
                    .map_err(|_| QueryError::syntax(start, format!("invalid literal `{token}`")))
            }
            Some(c) if is_ident_start(c) => {
                let path = self.parse_path()?;
                if path.0.len() == 1 {
                    let w = path.0[0].to_ascii_lowercase();
                    match w.as_str() {
                        "true" => return Ok(Operand::Literal(Literal::Bool(true))),
                        "false" => return Ok(Operand::Literal(Literal::Bool(false))),
                        "null" => return Ok(Operand::Literal(Literal::Null)),
                        _ => {}
                    }
                }
                Ok(Operand::Path(path))
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
        }
    }
}

fn insert_expand(nodes: &mut Vec<ExpandNode>, path: &[String], opts: QueryOptions) {
    let (head, rest) = path.split_first().expect("expand path is non-empty");
    let idx = match nodes.iter().position(|n| n.name.eq_ignore_ascii_case(head)) {
        Some(i) => i,
        None => {
            nodes.push(ExpandNode { name: head.clone(), options: QueryOptions::default() });
            nodes.len() - 1
        }
    };
    let node = &mut nodes[idx];
    if rest.is_empty() {
        if !opts.is_empty() {
            let children = std::mem::take(&mut node.options.expand);
            node.options = opts;
            for c in children {
                if !node.options.expand.iter().any(|n| n.name.eq_ignore_ascii_case(&c.name)) {
                    node.options.expand.push(c);
                }
            }
        }
    } else {
        insert_expand(&mut node.options.expand, rest, opts);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensor_type_filter() {
        let p = parse_query("Sensors?$filter=sensortype eq 'https://data.geoscience.fr/ncl/Proc/86'").unwrap();
        assert_eq!(p.path, vec![Segment { name: "Sensors".into(), id: None }]);
        assert_eq!(
            p.options.filter,
            Some(Expr::Compare {
                left: Operand::Path(PropertyPath(vec!["sensortype".into()])),
                op: CompareOp::Eq,
                right: Operand::Literal(Literal::Text("https://data.geoscience.fr/ncl/Proc/86".into())),
            })
        );
    }

    #[test]
    fn navigation_path() {
        let p = parse_query("BhCollarThings(1)/BhTrajectoryThings").unwrap();
        assert_eq!(p.path.len(), 2);
        assert_eq!(p.path[0].id, Some(EntityId(1)));
        assert!(p.options.is_empty());
    }

    #[test]
    fn empty_filter_offset() {
        let text = "Sensors?$filter=";
        match parse_query(text) {
            Err(QueryError::Syntax { offset, .. }) => assert_eq!(offset, text.len()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_set_and_option() {
        assert_eq!(parse_query("Nope"), Err(QueryError::UnknownEntitySet("Nope".into())));
        assert!(matches!(parse_query("Sensors?$count=true"), Err(QueryError::UnknownOption(_))));
        assert!(matches!(parse_query("Sensors?top=1"), Err(QueryError::UnknownOption(_))));
    }

    #[test]
    fn quote_escaping() {
        let p = parse_query("Sensors?$filter=name eq 'O''Brien'").unwrap();
        let Some(Expr::Compare { right: Operand::Literal(Literal::Text(t)), .. }) = p.options.filter else {
            panic!()
        };
        assert_eq!(t, "O'Brien");
    }

    #[test]
    fn nested_expand_with_options() {
        let text = "BhTrajectoryThings(9)?$select=name& $expand=BhSamplings( $orderBy=atPosition; \
            $select=atPosition,time; $expand=BhSamples( $top=1; $select=name; \
            $expand=Observations( $top=3; $select=result,phenomenonTime; \
            $expand=Datastream( $select=unitOfMeasurement; $expand=ObservedProperty( $select=name ) ) ) ) )";
        let p = parse_query(text).unwrap();
        let s = &p.options.expand[0];
        assert_eq!(s.name, "BhSamplings");
        assert_eq!(s.options.order_by[0].path.0, vec!["atPosition".to_string()]);
        let samples = &s.options.expand[0];
        assert_eq!(samples.options.top, Some(1));
        let obs = &samples.options.expand[0];
        assert_eq!(obs.options.expand[0].options.expand[0].name, "ObservedProperty");
        assert_eq!(parse_query(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn precedence_and_grouping() {
        let p = parse_query("Observations?$filter=a eq 1 or b eq 2 and c eq 3").unwrap();
        assert!(matches!(p.options.filter, Some(Expr::Or(..))));
        let p = parse_query("Observations?$filter=(a eq 1 or b eq 2) and c eq 3").unwrap();
        assert!(matches!(p.options.filter, Some(Expr::And(..))));
        assert_eq!(parse_query(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn slash_expand_merges() {
        let p = parse_query("Datastreams?$expand=Sensor,Observations/FeatureOfInterest,Observations($top=2)").unwrap();
        assert_eq!(p.options.expand.len(), 2);
        let obs = &p.options.expand[1];
        assert_eq!(obs.options.top, Some(2));
        assert_eq!(obs.options.expand[0].name, "FeatureOfInterest");
    }

    #[test]
    fn percent_decoding_and_datetime() {
        let p = parse_query("Observations?$filter=phenomenonTime%20gt%202018-07-19T00:00:00Z").unwrap();
        let Some(Expr::Compare { right: Operand::Literal(Literal::DateTime(_)), .. }) = p.options.filter else {
            panic!()
        };
        assert_eq!(parse_query(&p.to_url()).unwrap(), p);
    }
}
