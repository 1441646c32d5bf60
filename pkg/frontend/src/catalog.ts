/**
 * Message catalog lookup, mirroring the service's `key = value` files.
 * Missing keys render as a loud ⟦key⟧ placeholder instead of failing
 * silently or falling back to another language.
 */

export type Catalog = Record<string, string>;

export function parseCatalog(text: string): Catalog {
  const entries: Catalog = {};
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (line === "" || line.startsWith("#")) {
      continue;
    }
    const eq = line.indexOf("=");
    if (eq < 0) {
      continue;
    }
    entries[line.slice(0, eq).trim()] = line.slice(eq + 1).trim();
  }
  return entries;
}

export function message(catalog: Catalog, key: string): string {
  const value = catalog[key];
  return value === undefined ? `⟦${key}⟧` : value;
}
