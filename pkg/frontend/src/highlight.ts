// Read-only SQL highlighting. The markup is display-only: unwrapping the
// spans always yields the input string byte for byte, so the highlighted
// block never misrepresents what the service returned.

const KEYWORDS = new Set([
  'SELECT', 'FROM', 'WHERE', 'JOIN', 'ON', 'USING', 'GROUP', 'BY', 'ORDER',
  'HAVING', 'WITH', 'AS', 'AND', 'OR', 'NOT', 'IN', 'IS', 'NULL', 'LIKE',
  'BETWEEN', 'UNION', 'ALL', 'DISTINCT', 'CASE', 'WHEN', 'THEN', 'ELSE',
  'END', 'EXISTS', 'CROSS', 'INNER', 'LEFT', 'RIGHT', 'OUTER', 'FULL',
  'LIMIT', 'OFFSET', 'DATE', 'ASC', 'DESC',
]);

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function unescapeHtml(text: string): string {
  return text
    .replace(/&#39;/g, "'")
    .replace(/&quot;/g, '"')
    .replace(/&gt;/g, '>')
    .replace(/&lt;/g, '<')
    .replace(/&amp;/g, '&');
}

// Longest-match-first scanner; every character of the input lands in
// exactly one emitted slice.
const TOKEN = new RegExp(
  [
    String.raw`--[^\n]*`,
    String.raw`/\*[\s\S]*?(?:\*/|$)`,
    String.raw`'(?:[^']|'')*'?`,
    String.raw`\d+(?:\.\d+)?(?:[eE][+-]?\d+)?`,
    String.raw`[A-Za-z_][A-Za-z0-9_$#]*`,
    String.raw`[\s\S]`,
  ].join('|'),
  'g',
);

function classify(token: string): string | null {
  const first = token[0] ?? '';
  if (token.startsWith('--') || token.startsWith('/*')) return 'sql-comment';
  if (first === "'") return 'sql-string';
  if (first >= '0' && first <= '9') return 'sql-number';
  if (/[A-Za-z_]/.test(first) && KEYWORDS.has(token.toUpperCase())) {
    return 'sql-keyword';
  }
  return null;
}

/** Render SQL as HTML with span-wrapped tokens. */
export function highlightSql(sql: string): string {
  let html = '';
  for (const match of sql.matchAll(TOKEN)) {
    const cls = classify(match[0]);
    const escaped = escapeHtml(match[0]);
    html += cls ? `<span class="${cls}">${escaped}</span>` : escaped;
  }
  return html;
}

/** Inverse of highlightSql for verification: strip spans, unescape. */
export function extractText(html: string): string {
  return unescapeHtml(html.replace(/<\/?span[^>]*>/g, ''));
}
