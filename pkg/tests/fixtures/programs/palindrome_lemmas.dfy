lemma Soundness1(s: string, isPalindrome: bool)
  requires s == "aba" // Test input
  requires isPalindrome == true // Test output
  ensures isPalindrome == isStringPalindrome(s)
  ensures |s| <= 1 ==> isPalindrome
{}

lemma CompletenessContr1(s: string, isPalindrome: bool)
  requires s == "aba" // Test input
  requires isPalindrome != true // Test output negated
  requires isPalindrome == isStringPalindrome(s)
  requires |s| <= 1 ==> isPalindrome
  ensures false
{}

lemma CompletenessPerturb1(s: string, isPalindrome: bool)
  requires s == "aba" // Test input
  requires isPalindrome == false // Test output perturbed
  ensures isPalindrome == isStringPalindrome(s)
  ensures |s| <= 1 ==> isPalindrome
{}
