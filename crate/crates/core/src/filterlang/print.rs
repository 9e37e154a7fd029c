use super::{FieldPredicate, QueryAst};

/// Canonical text form. `parse_query(&print_query(a))` reproduces `a` for
/// every AST that passes [`QueryAst::validate`].
pub fn print_query(ast: &QueryAst) -> String {
    let mut out = String::new();
    write(ast, &mut out);
    out
}

fn write(ast: &QueryAst, out: &mut String) {
    match ast {
        QueryAst::Term(t) => out.push_str(t),
        QueryAst::Hashtag(t) => {
            out.push('#');
            out.push_str(t);
        }
        QueryAst::Field(FieldPredicate::Lang(code)) => {
            out.push_str("lang:");
            out.push_str(code);
        }
        QueryAst::Field(FieldPredicate::Is(flag)) => {
            out.push_str("is:");
            out.push_str(flag.as_str());
        }
        QueryAst::Not(child) => {
            out.push('-');
            write_child(child, out, matches!(**child, QueryAst::And(_) | QueryAst::Or(_)));
        }
        QueryAst::And(children) => {
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_child(c, out, matches!(c, QueryAst::And(_)));
            }
        }
        QueryAst::Or(children) => {
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" OR ");
                }
                write_child(c, out, matches!(c, QueryAst::And(_) | QueryAst::Or(_)));
            }
        }
    }
}

fn write_child(child: &QueryAst, out: &mut String, parens: bool) {
    if parens {
        out.push('(');
        write(child, out);
        out.push(')');
    } else {
        write(child, out);
    }
}
