// Discourse-marker highlighting hints (display only; matching for selection
// happens server-side).

export const MARKERS = [
  "because", "therefore", "however",
  "although", "though", "nevertheless",
  "nonetheless", "thus", "hence",
  "consequently", "for this reason", "due to",
  "in particular", "particularly", "specifically",
  "in fact", "actually", "but",
] as const;

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// longest first so "in particular" wins over "particularly" prefix overlaps
const pattern = new RegExp(
  "\\b(" +
    [...MARKERS]
      .sort((a, b) => b.length - a.length)
      .map((m) => m.replace(/ /g, "\\s+"))
      .join("|") +
    ")\\b",
  "gi",
);

export function highlightMarkers(text: string): string {
  return escapeHtml(text).replace(pattern, "<mark>$1</mark>");
}
